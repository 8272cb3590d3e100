// scratch: determine the correct closed-form coupling block of the SE(3)
// left Jacobian against the series implementation
use legcal_core::manifold::{se3_left_jacobian, skew, twist_from_parts};
use nalgebra::{Matrix3, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn q_candidate(omega: &Vector3<f64>, rho: &Vector3<f64>, s2: f64, s3: f64) -> Matrix3<f64> {
    let th2 = omega.norm_squared();
    let th = th2.sqrt();
    let (c1, c2, c3) = if th < 1e-3 {
        (
            1.0 / 6.0 - th2 / 120.0,
            -(1.0 / 24.0 - th2 / 720.0),
            -0.5 * (-(1.0 / 24.0) + 3.0 / 120.0 + th2 * (1.0 / 720.0 - 3.0 / 5040.0)),
        )
    } else {
        let c1 = (th - th.sin()) / (th2 * th);
        let c2 = (1.0 - th2 / 2.0 - th.cos()) / (th2 * th2);
        let c3 = -0.5 * (c2 - 3.0 * (th - th.sin() - th2 * th / 6.0) / (th2 * th2 * th));
        (c1, c2, c3)
    };
    let w = skew(omega);
    let r = skew(rho);
    0.5 * r
        + c1 * (w * r + r * w + w * r * w)
        + s2 * c2 * (w * w * r + r * w * w - 3.0 * w * r * w)
        + s3 * c3 * (w * r * w * w + w * w * r * w)
}

fn main() {
    let mut rng = StdRng::seed_from_u64(7);
    for (s2, s3) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let omega = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            let rho = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let xi = twist_from_parts(&omega, &rho);
            let jl = se3_left_jacobian(&xi);
            let q_ref = jl.fixed_view::<3, 3>(3, 0).clone_owned();
            let q = q_candidate(&omega, &rho, s2, s3);
            worst = worst.max((q - q_ref).norm() / q_ref.norm().max(1e-12));
        }
        println!("s2={s2:+} s3={s3:+}: worst rel {worst:.3e}");
    }
}
