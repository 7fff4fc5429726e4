/// Patience-based stopping on a monitored loss.
///
/// An epoch improves when its loss is strictly below the best so far by at
/// least `min_delta`. Training stops once `patience` consecutive epochs fail
/// to improve.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Records the loss of `epoch` (1-based). Returns `true` when training should stop.
    pub fn update(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best && self.best - loss >= self.min_delta {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }

    pub fn improved_at(&self, epoch: usize) -> bool {
        self.best_epoch == epoch
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}
