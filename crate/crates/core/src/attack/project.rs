//! Projection onto the intersection of a norm ball around the clean
//! point and the `[0, 1]` feature box.

use crate::attack::{AttackConfig, AttackNorm};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// When the displacement must be pulled back onto the ball, target this
/// fraction of the radius instead of the radius itself. Re-measuring the
/// displacement of the returned point picks up rounding from the
/// point-space round trip; the margin keeps that measurement strictly
/// inside the ball so a second projection is a no-op bit for bit, while
/// staying far inside any feasibility tolerance anyone checks against.
const BALL_MARGIN: f64 = 1.0 - 1e-12;

/// Projects `v` into the feasible set `{x : ||x - x0||_p <= eps} ∩ [0,1]^d`.
///
/// One pass projects the displacement onto the ball and then clamps to
/// the box. Because `x0` itself lies in the box, the clamp moves every
/// coordinate towards `x0`, so it can only shrink any p-norm of the
/// displacement: the result is feasible and the operation is idempotent
/// (exactly — see [`BALL_MARGIN`]; for the sup norm ball-then-box is a
/// single coordinatewise clamp, which is idempotent on its own).
/// `extra_projection_rounds` repeats ball-then-box for callers who want
/// the alternating-projection refinement; every round ends with the box
/// clamp, preserving feasibility.
pub fn project(v: &Tensor, x0: &Tensor, cfg: &AttackConfig) -> Result<Tensor> {
    if v.shape() != x0.shape() {
        return Err(Error::Shape {
            expected: x0.shape().to_vec(),
            actual: v.shape().to_vec(),
        });
    }
    cfg.validate()?;
    let mut x = v.data().to_vec();
    for _ in 0..=cfg.extra_projection_rounds {
        match cfg.norm {
            AttackNorm::LInf => {
                // Ball ∩ box is itself a box.
                for (xi, &x0i) in x.iter_mut().zip(x0.data()) {
                    let lo = (x0i - cfg.epsilon).max(0.0);
                    let hi = (x0i + cfg.epsilon).min(1.0);
                    *xi = xi.clamp(lo, hi);
                }
            }
            AttackNorm::L2 | AttackNorm::L1 => {
                let mut d: Vec<f64> =
                    x.iter().zip(x0.data()).map(|(a, b)| a - b).collect();
                if ball_pullback(&mut d, cfg.epsilon, cfg.norm) {
                    for (xi, (&di, &x0i)) in x.iter_mut().zip(d.iter().zip(x0.data())) {
                        *xi = x0i + di;
                    }
                }
                for xi in x.iter_mut() {
                    *xi = xi.clamp(0.0, 1.0);
                }
            }
        }
    }
    Tensor::new(v.shape().to_vec(), x)
}

/// Pulls `d` onto the `eps` ball when it lies outside; returns whether
/// it moved.
fn ball_pullback(d: &mut [f64], eps: f64, norm: AttackNorm) -> bool {
    match norm {
        AttackNorm::LInf => unreachable!("sup norm is handled as a clamp"),
        AttackNorm::L2 => {
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n <= eps {
                return false;
            }
            let scale = eps * BALL_MARGIN / n;
            for di in d.iter_mut() {
                *di *= scale;
            }
            true
        }
        AttackNorm::L1 => l1_ball_pullback(d, eps),
    }
}

/// Euclidean projection onto the l1 ball: sort-based simplex projection
/// of the magnitudes with signs restored.
fn l1_ball_pullback(d: &mut [f64], eps: f64) -> bool {
    let l1: f64 = d.iter().map(|x| x.abs()).sum();
    if l1 <= eps {
        return false;
    }
    let radius = eps * BALL_MARGIN;
    if radius == 0.0 {
        d.fill(0.0);
        return true;
    }
    let mut mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    for di in d.iter_mut() {
        *di = di.signum() * (di.abs() - tau).max(0.0);
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(eps: f64, norm: AttackNorm) -> AttackConfig {
        AttackConfig::new(eps, norm)
    }

    #[test]
    fn l1_projection_matches_worked_example() {
        // From the origin with radius 1, (0.5, 0.7) has l1 norm 1.2;
        // the simplex projection shifts both magnitudes by tau = 0.1.
        let x0 = Tensor::from_vec(vec![0.0, 0.0]);
        let v = Tensor::from_vec(vec![0.5, 0.7]);
        let p = project(&v, &x0, &cfg(1.0, AttackNorm::L1)).unwrap();
        assert!((p.data()[0] - 0.4).abs() < 1e-12);
        assert!((p.data()[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn projections_are_feasible_and_idempotent() {
        let x0 = Tensor::from_vec(vec![0.2, 0.9, 0.5, 0.0]);
        let v = Tensor::from_vec(vec![1.9, -0.7, 0.55, 2.0]);
        for norm in [AttackNorm::L1, AttackNorm::L2, AttackNorm::LInf] {
            for eps in [0.0, 0.3, 1.5] {
                let c = cfg(eps, norm);
                let p = project(&v, &x0, &c).unwrap();
                let d: Vec<f64> = p.data().iter().zip(x0.data()).map(|(a, b)| a - b).collect();
                assert!(
                    norm.norm(&d) <= eps * (1.0 + 1e-12) + 1e-15,
                    "{norm:?} at eps {eps}: norm {}",
                    norm.norm(&d)
                );
                assert!(p.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
                let pp = project(&p, &x0, &c).unwrap();
                for (a, b) in p.data().iter().zip(pp.data()) {
                    assert_eq!(a, b, "{norm:?} at eps {eps} not idempotent");
                }
            }
        }
    }

    #[test]
    fn zero_budget_returns_the_clean_point() {
        let x0 = Tensor::from_vec(vec![0.25, 0.75]);
        let v = Tensor::from_vec(vec![0.9, -0.4]);
        for norm in [AttackNorm::L1, AttackNorm::L2, AttackNorm::LInf] {
            let p = project(&v, &x0, &cfg(0.0, norm)).unwrap();
            assert_eq!(p.data(), x0.data());
        }
    }

    #[test]
    fn linf_projection_is_a_coordinate_clamp() {
        let x0 = Tensor::from_vec(vec![0.5, 0.5, 0.1]);
        let v = Tensor::from_vec(vec![0.95, 0.0, 0.35]);
        let p = project(&v, &x0, &cfg(0.2, AttackNorm::LInf)).unwrap();
        assert!((p.data()[0] - 0.7).abs() < 1e-15);
        assert!((p.data()[1] - 0.3).abs() < 1e-15);
        assert!((p.data()[2] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn extra_rounds_stay_feasible() {
        let x0 = Tensor::from_vec(vec![0.05, 0.95]);
        let v = Tensor::from_vec(vec![3.0, -1.0]);
        let mut c = cfg(0.8, AttackNorm::L2);
        c.extra_projection_rounds = 5;
        let p = project(&v, &x0, &c).unwrap();
        let d: Vec<f64> = p.data().iter().zip(x0.data()).map(|(a, b)| a - b).collect();
        assert!(AttackNorm::L2.norm(&d) <= 0.8 + 1e-12);
        assert!(p.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}
