/// Multiplies the learning rate by `factor` once the monitored loss has gone
/// `patience` consecutive observations without strictly beating the best
/// value seen so far. The counter restarts after every improvement and
/// every reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    base_rate: f64,
    factor: f64,
    patience: usize,
    best: Option<f64>,
    stale: usize,
    reductions: u32,
}

impl PlateauScheduler {
    pub fn new(base_rate: f64, factor: f64, patience: usize) -> Self {
        PlateauScheduler {
            base_rate,
            factor,
            patience: patience.max(1),
            best: None,
            stale: 0,
            reductions: 0,
        }
    }

    /// Sets the value later observations must beat (typically the loss of
    /// the untrained model).
    pub fn with_reference(mut self, loss: f64) -> Self {
        self.best = Some(loss);
        self
    }

    /// `base_rate * factor^reductions`.
    pub fn learning_rate(&self) -> f64 {
        self.base_rate * self.factor.powi(self.reductions as i32)
    }

    pub fn reductions(&self) -> u32 {
        self.reductions
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records one epoch's loss and returns true if the rate was reduced.
    /// Without a reference, the first observation only establishes one and
    /// counts as an epoch without improvement.
    pub fn observe(&mut self, loss: f64) -> bool {
        match self.best {
            Some(best) if loss < best => {
                self.best = Some(loss);
                self.stale = 0;
                return false;
            }
            Some(_) => {}
            None => self.best = Some(loss),
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            self.reductions += 1;
            return true;
        }
        false
    }
}
