use std::collections::VecDeque;

use chrono::NaiveDate;

use super::{BacktestError, Result};

/// Ten historical days plus the current one.
pub const BUFFER_CAPACITY: usize = 11;

/// One buffered trading day: its date and row in the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferedDay {
    pub date: NaiveDate,
    pub row: usize,
}

/// Rolling window of the most recent trading days used for online updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineBuffer {
    days: VecDeque<BufferedDay>,
    capacity: usize,
}

impl Default for OnlineBuffer {
    fn default() -> Self {
        Self::new()
    }
}

impl OnlineBuffer {
    pub fn new() -> Self {
        Self::with_capacity(BUFFER_CAPACITY)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            days: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Appends a day, evicting the oldest when full. Days must arrive in
    /// strictly increasing date order.
    pub fn push(&mut self, day: BufferedDay) -> Result<()> {
        if let Some(last) = self.days.back() {
            if day.date <= last.date || day.row <= last.row {
                return Err(BacktestError::Chronology {
                    last: last.date,
                    pushed: day.date,
                });
            }
        }
        if self.days.len() == self.capacity {
            self.days.pop_front();
        }
        self.days.push_back(day);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn days(&self) -> impl Iterator<Item = &BufferedDay> {
        self.days.iter()
    }

    pub fn rows(&self) -> Vec<usize> {
        self.days.iter().map(|d| d.row).collect()
    }

    pub fn latest_date(&self) -> Option<NaiveDate> {
        self.days.back().map(|d| d.date)
    }
}
