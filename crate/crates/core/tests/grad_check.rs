//! Finite-difference verification of every architecture's backward pass.
//!
//! The oracle is central differencing of the public forward/loss path, which
//! never touches the backward code. ReLU networks are piecewise smooth, so a
//! central difference is only a valid derivative oracle when the step does
//! not straddle a kink (or the clip boundary); parameters where the two
//! one-sided slopes disagree are therefore excluded, and the test asserts
//! that such exclusions stay rare.

use aipw_core::nn::{
    loss_and_grad, loss_value, LossKind, Mlp, Network, PracticalCnn, TheoreticalCnn,
};
use aipw_core::Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

struct CheckTally {
    params_checked: usize,
    params_skipped: usize,
    max_rel_err: f64,
}

fn loss_at<N: Network>(net: &N, x: &[f64], target: f64, loss: LossKind, clip: Option<f64>) -> f64
where
    N: Network,
{
    let mut scratch = net.new_scratch();
    let raw = net.forward_cached(x, &mut scratch);
    let pred = match clip {
        Some(b) => raw.clamp(-b, b),
        None => raw,
    };
    loss_value(loss, pred, target).unwrap()
}

fn check_network<N: Network>(
    net: &mut N,
    x: &[f64],
    target: f64,
    loss: LossKind,
    clip: Option<f64>,
    rng: &mut Rng,
    tally: &mut CheckTally,
) {
    // generic parameter position: zero-initialized biases would park whole
    // layers exactly on ReLU kinks
    for k in 0..net.n_params() {
        net.params_mut()[k] = rng.uniform(-0.8, 0.8);
    }
    let (_, analytic) = loss_and_grad(net, x, target, loss, clip).unwrap();
    for k in 0..net.n_params() {
        let orig = net.params()[k];
        net.params_mut()[k] = orig + H;
        let up = loss_at(net, x, target, loss, clip);
        net.params_mut()[k] = orig - H;
        let down = loss_at(net, x, target, loss, clip);
        net.params_mut()[k] = orig;
        let center = loss_at(net, x, target, loss, clip);

        let numeric = (up - down) / (2.0 * H);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
        if rel <= REL_TOL {
            tally.params_checked += 1;
            tally.max_rel_err = tally.max_rel_err.max(rel);
            continue;
        }

        // Central differencing is not a valid oracle where the step
        // straddles a ReLU kink or the clip boundary; there the analytic
        // value is any subgradient selection and must merely lie within the
        // one-sided slope bracket.
        let s_plus = (up - center) / H;
        let s_minus = (center - down) / H;
        let pad = 1e-3 * (1.0 + s_plus.abs().max(s_minus.abs()));
        let lo = s_plus.min(s_minus) - pad;
        let hi = s_plus.max(s_minus) + pad;
        assert!(
            a >= lo && a <= hi,
            "param {k}: analytic {a} vs numeric {numeric} (rel {rel:.3e}, bracket [{lo}, {hi}])"
        );
        tally.params_skipped += 1;
    }
}

fn run_family(family: &str, loss: LossKind, configs: usize, seed: u64) -> CheckTally {
    let mut tally = CheckTally { params_checked: 0, params_skipped: 0, max_rel_err: 0.0 };
    for c in 0..configs {
        let mut rng = Rng::substream(seed, c as u64);
        let target = match loss {
            LossKind::Squared => rng.uniform(-1.5, 1.5),
            LossKind::Logistic => f64::from(rng.bernoulli(0.5).unwrap()),
        };
        let clip = match loss {
            LossKind::Squared => Some(3.0),
            LossKind::Logistic => None,
        };
        match family {
            "theoretical" => {
                let d = 2 + rng.below(4); // 2..=5
                let s = 2 + rng.below((d - 1).min(2)); // 2..=min(d,3)
                let depth = 1 + rng.below(3);
                let channels = 1 + rng.below(2);
                let mut net = TheoreticalCnn::init(d, s, depth, channels, &mut rng).unwrap();
                let x: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
                check_network(&mut net, &x, target, loss, clip, &mut rng, &mut tally);
            }
            "practical" => {
                let in_ch = 1 + rng.below(2);
                let len = 4 + rng.below(3);
                let span = 1 + rng.below(2);
                let layers: Vec<usize> = (0..1 + rng.below(2)).map(|_| 2 + rng.below(3)).collect();
                let static_dim = rng.below(3);
                let widths: Vec<usize> =
                    if static_dim > 0 { vec![2 + rng.below(2)] } else { vec![] };
                let mut net = PracticalCnn::init(
                    in_ch, len, span, &layers, static_dim, &widths, &mut rng,
                )
                .unwrap();
                let x: Vec<f64> =
                    (0..net.input_dim()).map(|_| rng.uniform(-1.0, 1.0)).collect();
                check_network(&mut net, &x, target, loss, clip, &mut rng, &mut tally);
            }
            "mlp" => {
                let d = 2 + rng.below(5);
                let w1 = 2 + rng.below(6);
                let w2 = 2 + rng.below(4);
                let mut net = Mlp::init(d, [w1, w2], &mut rng).unwrap();
                let x: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
                check_network(&mut net, &x, target, loss, clip, &mut rng, &mut tally);
            }
            _ => unreachable!(),
        }
    }
    assert!(
        tally.params_checked > 50 * configs / 10,
        "{family}: too few parameters actually checked ({})",
        tally.params_checked
    );
    assert!(
        (tally.params_skipped as f64) < 0.05 * tally.params_checked as f64,
        "{family}: too many kink skips ({} of {})",
        tally.params_skipped,
        tally.params_checked
    );
    tally
}

#[test]
fn gradients_theoretical_cnn_both_losses() {
    for (loss, seed) in [(LossKind::Squared, 101), (LossKind::Logistic, 102)] {
        let t = run_family("theoretical", loss, 100, seed);
        println!(
            "theoretical {loss:?}: {} params, max rel err {:.2e}, {} skipped",
            t.params_checked, t.max_rel_err, t.params_skipped
        );
    }
}

#[test]
fn gradients_practical_cnn_both_losses() {
    for (loss, seed) in [(LossKind::Squared, 201), (LossKind::Logistic, 202)] {
        let t = run_family("practical", loss, 100, seed);
        println!(
            "practical {loss:?}: {} params, max rel err {:.2e}, {} skipped",
            t.params_checked, t.max_rel_err, t.params_skipped
        );
    }
}

#[test]
fn gradients_mlp_both_losses() {
    for (loss, seed) in [(LossKind::Squared, 301), (LossKind::Logistic, 302)] {
        let t = run_family("mlp", loss, 100, seed);
        println!(
            "mlp {loss:?}: {} params, max rel err {:.2e}, {} skipped",
            t.params_checked, t.max_rel_err, t.params_skipped
        );
    }
}

#[test]
fn gradient_zero_outside_clip() {
    // when the raw output sits beyond the clip bound, every analytic
    // gradient must vanish (subgradient 0 outside the clamp)
    let mut rng = Rng::new(999);
    let mut found = 0;
    for _ in 0..200 {
        let net = Mlp::init(3, [4, 3], &mut rng).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut scratch = net.new_scratch();
        let raw = net.forward_cached(&x, &mut scratch);
        if raw.abs() > 0.05 {
            let bound = raw.abs() * 0.5;
            let (_, grad) = loss_and_grad(&net, &x, 0.0, LossKind::Squared, Some(bound)).unwrap();
            assert!(grad.iter().all(|&g| g == 0.0));
            found += 1;
        }
    }
    assert!(found > 50);
}
