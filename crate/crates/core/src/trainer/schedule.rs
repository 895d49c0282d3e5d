//! Epoch bookkeeping: keep the best validation score, count epochs without
//! strict improvement, stop once the count exceeds the patience.

use serde::Serialize;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochVerdict {
    Improved,
    NoImprovement,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    counter: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            counter: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val: f64) -> EpochVerdict {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.counter = 0;
            EpochVerdict::Improved
        } else {
            self.counter += 1;
            if self.counter > self.patience {
                EpochVerdict::Stop
            } else {
                EpochVerdict::NoImprovement
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn counter(&self) -> usize {
        self.counter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_mse: f64,
    pub train_kld: f64,
    pub val_mae: f64,
}

/// Progress of one training run. Epochs are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub counter: usize,
    pub history: Vec<EpochRecord>,
}

/// Runs epochs until `max_epochs` or the early stop fires. `epoch_fn` trains one
/// epoch and returns its record; `on_improve` is called on every new best.
pub fn drive(
    max_epochs: usize,
    patience: usize,
    mut epoch_fn: impl FnMut(usize) -> Result<EpochRecord>,
    mut on_improve: impl FnMut(usize) -> Result<()>,
) -> Result<TrainState> {
    let mut stopper = EarlyStopping::new(patience);
    let mut history = Vec::new();
    let mut epoch = 0;
    while epoch < max_epochs {
        epoch += 1;
        let record = epoch_fn(epoch)?;
        history.push(record);
        match stopper.observe(epoch, record.val_mae) {
            EpochVerdict::Improved => on_improve(epoch)?,
            EpochVerdict::NoImprovement => {}
            EpochVerdict::Stop => break,
        }
    }
    Ok(TrainState {
        epoch,
        best_val: stopper.best(),
        best_epoch: stopper.best_epoch(),
        counter: stopper.counter(),
        history,
    })
}
