use std::collections::VecDeque;

/// Per-arm bookkeeping: selection count, FIFO utility window and its cached mean.
///
/// The count starts at 1 so the exploration bonus is defined before the first
/// selection. The utility is the mean of whatever the window currently holds,
/// which means partially filled windows are averaged over their actual length.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    count: u64,
    window: VecDeque<f64>,
    capacity: usize,
    utility: f64,
}

impl ArmStats {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        Self {
            count: 1,
            window: VecDeque::with_capacity(capacity),
            capacity,
            utility: 0.0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn utility(&self) -> f64 {
        self.utility
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn window(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// Pushes one utility sample (evicting the oldest at capacity), refreshes the
    /// cached mean and bumps the count.
    pub(crate) fn record(&mut self, sample: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(sample);
        // Recomputed from scratch: windows are small and a running sum drifts.
        self.utility = self.window.iter().sum::<f64>() / self.window.len() as f64;
        self.count += 1;
    }
}
