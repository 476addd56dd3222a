//! Central finite-difference check of the hand-written backward pass.

use rand::seq::index;

use super::model::{Backward, QNetwork, PARAM_COUNT};
use super::replay::Episode;
use super::train::td_loss_grad;
use crate::seed;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero compare on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probed: Vec<usize>,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_abs_gradient: f64,
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the analytic TD-loss gradient with central differences of step
/// `h` on `probes` randomly chosen parameters.
pub fn gradient_check(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[Episode],
    gamma: f64,
    reward_scale: f64,
    probes: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport {
    check_with(online, target, batch, gamma, reward_scale, probes, h, seed, Backward::Exact)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn check_with(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[Episode],
    gamma: f64,
    reward_scale: f64,
    probes: usize,
    h: f64,
    seed: u64,
    mode: Backward,
) -> GradCheckReport {
    let refs: Vec<&Episode> = batch.iter().collect();
    let mut grad = vec![0.0; PARAM_COUNT];
    td_loss_grad(online, target, &refs, gamma, reward_scale, Some(&mut grad), mode);

    let mut rng = seed::rng_at(seed, &[seed::label("gradcheck")]);
    let mut probed = index::sample(&mut rng, PARAM_COUNT, probes.min(PARAM_COUNT)).into_vec();
    probed.sort_unstable();

    let mut report = GradCheckReport { probed: probed.clone(), max_rel_error: 0.0, max_abs_error: 0.0, max_abs_gradient: 0.0 };
    let mut shifted = online.clone();
    for &i in &probed {
        let original = shifted.params()[i];
        shifted.params_mut()[i] = original + h;
        let up = td_loss_grad(&shifted, target, &refs, gamma, reward_scale, None, mode);
        shifted.params_mut()[i] = original - h;
        let down = td_loss_grad(&shifted, target, &refs, gamma, reward_scale, None, mode);
        shifted.params_mut()[i] = original;
        let numeric = (up - down) / (2.0 * h);
        report.max_rel_error = report.max_rel_error.max(relative_error(grad[i], numeric));
        report.max_abs_error = report.max_abs_error.max((grad[i] - numeric).abs());
        report.max_abs_gradient = report.max_abs_gradient.max(grad[i].abs());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::play_episode;
    use crate::network::generate_batch;

    fn probe_batch(seed: u64) -> Vec<Episode> {
        let (pool, _) = generate_batch(&Default::default(), "gc", 4).unwrap();
        let mut rng = seed::rng(seed);
        let behaviour = QNetwork::new(seed + 100);
        pool.iter().map(|n| play_episode(&behaviour, n, 0.5, &mut rng)).collect()
    }

    #[test]
    fn fresh_network_passes() {
        let online = QNetwork::new(1);
        let target = QNetwork::new(2);
        let r = gradient_check(&online, &target, &probe_batch(1), 0.99, 0.01, 300, 1e-4, 1);
        assert_eq!(r.probed.len(), 300);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn fixed_point_gradients_vanish() {
        // zero network: every Q is 0; rewards of 0 make every target 0
        let online = QNetwork::zeros();
        let mut batch = probe_batch(2);
        for ep in &mut batch {
            for s in &mut ep.steps {
                s.reward = 0;
            }
        }
        let r = gradient_check(&online, &online, &batch, 0.99, 0.01, 250, 1e-4, 2);
        assert!(r.max_abs_gradient < 1e-8);
        assert!(r.max_abs_error < 1e-8);
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let online = QNetwork::new(3);
        let target = QNetwork::new(4);
        let r = check_with(&online, &target, &probe_batch(3), 0.99, 0.01, 400, 1e-4, 3, Backward::DropRecurrentPath);
        assert!(r.max_rel_error > 1e-2, "{r:?}");
    }
}
