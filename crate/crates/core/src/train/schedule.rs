//! Training recipes. Defaults are the published constants.

/// How a batch gradient is clipped before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipPolicy {
    None,
    /// Each distinct parameter tensor is clipped to this norm on its own.
    PerTensor(f64),
    /// The concatenation of all tensors is clipped to this norm.
    Global(f64),
}

/// QA recipe. Batch losses are summed, not averaged, so the step size is
/// `lr` times a sum over up to `batch_size` examples.
#[derive(Debug, Clone, PartialEq)]
pub struct QaSchedule {
    pub lr: f64,
    pub anneal_every: usize,
    pub anneal_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip: ClipPolicy,
    pub restarts: usize,
    pub init_sigma: f64,
    /// Train first with memory softmaxes removed.
    pub linear_start: bool,
    /// Learning rate of a run that uses linear start (both phases).
    pub ls_lr: f64,
    /// Epochs without validation-loss improvement that end linear start.
    pub ls_patience: usize,
    pub ls_max_epochs: usize,
    /// Inject empty memories at training time.
    pub random_noise: bool,
    pub noise_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for QaSchedule {
    fn default() -> Self {
        Self::per_task()
    }
}

impl QaSchedule {
    /// Independent per-task training: 100 epochs, halving every 25.
    pub fn per_task() -> Self {
        Self {
            lr: 0.01,
            anneal_every: 25,
            anneal_factor: 0.5,
            epochs: 100,
            batch_size: 32,
            clip: ClipPolicy::PerTensor(40.0),
            restarts: 10,
            init_sigma: 0.1,
            linear_start: false,
            ls_lr: 0.005,
            ls_patience: 3,
            ls_max_epochs: 100,
            random_noise: false,
            noise_fraction: 0.1,
            validation_fraction: 0.1,
        }
    }

    /// Joint training on all tasks, 1k examples each.
    pub fn joint_1k() -> Self {
        Self {
            epochs: 60,
            anneal_every: 15,
            ..Self::per_task()
        }
    }

    /// Joint training on all tasks, 10k examples each.
    pub fn joint_10k() -> Self {
        Self {
            epochs: 20,
            anneal_every: 5,
            ..Self::per_task()
        }
    }

    pub fn initial_lr(&self) -> f64 {
        if self.linear_start {
            self.ls_lr
        } else {
            self.lr
        }
    }

    /// Learning rate of main-phase epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let anneals = epoch / self.anneal_every.max(1);
        self.initial_lr() * self.anneal_factor.powi(anneals as i32)
    }
}

/// Language-model recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct LmSchedule {
    pub lr: f64,
    /// Divisor applied when validation cost fails to decrease over an epoch.
    pub anneal_factor: f64,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub clip: ClipPolicy,
    pub init_sigma: f64,
    pub restarts: usize,
}

impl Default for LmSchedule {
    fn default() -> Self {
        Self {
            lr: 0.01,
            anneal_factor: 1.5,
            min_lr: 1e-5,
            max_epochs: 100,
            batch_size: 128,
            clip: ClipPolicy::Global(50.0),
            init_sigma: 0.05,
            restarts: 10,
        }
    }
}

impl LmSchedule {
    /// Single run, as for corpora too large to restart.
    pub fn single_run() -> Self {
        Self {
            restarts: 1,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qa_anneal_schedule() {
        let s = QaSchedule::per_task();
        assert_eq!(s.lr_at(0), 0.01);
        assert_eq!(s.lr_at(24), 0.01);
        assert_eq!(s.lr_at(25), 0.005);
        assert_eq!(s.lr_at(99), 0.01 / 8.0);
        let ls = QaSchedule {
            linear_start: true,
            ..s
        };
        assert_eq!(ls.lr_at(0), 0.005);
        assert_eq!(QaSchedule::joint_10k().lr_at(5), 0.005);
    }

    #[test]
    fn published_constants() {
        let q = QaSchedule::default();
        assert_eq!((q.batch_size, q.restarts, q.init_sigma), (32, 10, 0.1));
        assert_eq!(q.clip, ClipPolicy::PerTensor(40.0));
        let l = LmSchedule::default();
        assert_eq!((l.batch_size, l.init_sigma, l.min_lr), (128, 0.05, 1e-5));
        assert_eq!(l.clip, ClipPolicy::Global(50.0));
    }
}
