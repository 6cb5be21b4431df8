/// Running count of floating-point operations executed on the on-line path.
///
/// Kernels add their operation counts as they run, so the total reflects what
/// was actually executed for a given MPC step. Comparisons used to take an
/// infinity norm count as one operation each.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FlopCounter {
    count: u64,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, flops: u64) {
        self.count += flops;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }
}

/// Operations in a dense `rows x cols` matrix-vector product.
#[inline]
pub(crate) fn gemv(rows: usize, cols: usize) -> u64 {
    2 * rows as u64 * cols as u64
}
