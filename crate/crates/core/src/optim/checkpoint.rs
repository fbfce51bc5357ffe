use crate::nn::NetworkState;

/// Keeps the weights of the epoch with the lowest validation loss.
/// Epochs are numbered from 1; ties keep the earlier epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointState {
    best: Option<(usize, f64, NetworkState)>,
}

impl CheckpointState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true if this epoch became the new best.
    pub fn update(&mut self, epoch: usize, val_loss: f64, net: &NetworkState) -> bool {
        let better = match &self.best {
            None => val_loss.is_finite(),
            Some((_, best, _)) => val_loss < *best,
        };
        if better {
            self.best = Some((epoch, val_loss, net.clone()));
        }
        better
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn best_val_loss(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.1)
    }

    pub fn best_weights(&self) -> Option<&NetworkState> {
        self.best.as_ref().map(|b| &b.2)
    }

    pub fn into_best(self) -> Option<(usize, f64, NetworkState)> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64]) -> CheckpointState {
        let mut c = CheckpointState::new();
        for (i, &l) in losses.iter().enumerate() {
            let net = NetworkState::meta_network(1, i as u64).unwrap();
            c.update(i + 1, l, &net);
        }
        c
    }

    #[test]
    fn argmin_epoch() {
        let c = run(&[0.3, 0.2, 0.25]);
        assert_eq!(c.best_epoch(), Some(2));
        assert_eq!(c.best_val_loss(), 0.2);
        assert_eq!(c.best_weights().unwrap().rng_seed(), 1);
    }

    #[test]
    fn tie_keeps_earlier() {
        assert_eq!(run(&[0.2, 0.2]).best_epoch(), Some(1));
    }

    #[test]
    fn empty_has_no_snapshot() {
        let c = CheckpointState::new();
        assert!(c.best_weights().is_none());
        assert_eq!(c.best_val_loss(), f64::INFINITY);
    }
}
