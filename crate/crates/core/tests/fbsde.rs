use ddpmlab::fbsde::{bsde_residual_curve, h_martingale_check, pde_residual, yast_check, YastMode};
use ddpmlab::{MixtureTarget, NoiseSchedule};

#[test]
fn minus_sign_residual_shrinks_on_a_mixture() {
    let t = MixtureTarget::symmetric_pair(1.5);
    let s = NoiseSchedule::constant_total(10, 3.0).unwrap();
    let coarse = bsde_residual_curve(&t, &s, 16, 2_000, 1, &[0]).unwrap();
    let fine = bsde_residual_curve(&t, &s, 64, 2_000, 1, &[0]).unwrap();
    let (c, f) = (coarse.row(0, -1).unwrap().rms, fine.row(0, -1).unwrap().rms);
    // strong order one half for a state-dependent score
    assert!(f < 0.75 * c, "{c} -> {f}");
    assert!(fine.row(0, 1).unwrap().rms > 10.0 * f);
    assert_eq!(fine.diverged, 0);
}

#[test]
fn pde_sign_on_a_two_dimensional_mixture() {
    let t = MixtureTarget::new(vec![0.5, 0.5], vec![-1.0, 0.5, 1.0, -0.5], vec![1.0, 0.2, 0.2, 0.8]).unwrap();
    let s = NoiseSchedule::ho_scaled(40).unwrap();
    let g = t.default_grid(41).unwrap();
    let good = pde_residual(&t, &s, 0.3125, &g, -1).unwrap();
    let bad = pde_residual(&t, &s, 0.3125, &g, 1).unwrap();
    assert!(good.max <= 1e-5 * good.scale, "{good:?}");
    assert!(bad.max >= 1e-2 * bad.scale, "{bad:?}");
}

#[test]
fn yast_regression_near_the_start() {
    let t = MixtureTarget::symmetric_pair(2.0);
    let s = NoiseSchedule::constant_total(10, 3.0).unwrap();
    let r = yast_check(&t, &s, 16, 20_000, 5, 16, YastMode::Regression { degree: 3 }).unwrap();
    assert!(r.relative_rms < 0.1, "{r:?}");
    assert_eq!(r.basis, 4);
}

#[test]
fn h_martingale_on_a_mixture() {
    let t = MixtureTarget::new(vec![0.3, 0.7], vec![-2.0, 1.0], vec![1.5]).unwrap();
    let s = NoiseSchedule::ho_scaled(40).unwrap();
    let g = t.default_grid(2001).unwrap();
    let r = h_martingale_check(&t, &s, 20_000, 3, &[0.0, 0.25, 0.5, 0.9], &g).unwrap();
    assert!(r.worst_z() < 4.0, "{r:?}");
}
