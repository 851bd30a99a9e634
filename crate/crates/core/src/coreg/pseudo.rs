use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scene::{normalize_quat, Camera};

/// A synthesized camera between two neighboring training cameras.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoView {
    pub camera: Camera,
    /// Indices of the two parent training cameras.
    pub parents: [usize; 2],
}

/// Spherical interpolation between unit quaternions after aligning signs so
/// the shorter arc is taken.
pub fn slerp(a: [f64; 4], b: [f64; 4], t: f64) -> [f64; 4] {
    let a = normalize_quat(a);
    let mut b = normalize_quat(b);
    let mut dot: f64 = (0..4).map(|k| a[k] * b[k]).sum();
    if dot < 0.0 {
        b = b.map(|v| -v);
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        return normalize_quat(std::array::from_fn(|k| a[k] + t * (b[k] - a[k])));
    }
    let theta = dot.min(1.0).acos();
    let s = theta.sin();
    let (wa, wb) = (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s);
    normalize_quat(std::array::from_fn(|k| wa * a[k] + wb * b[k]))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Nearest other camera by center distance; ties go to the lower index.
pub fn nearest_camera(cameras: &[Camera], i: usize) -> Option<usize> {
    let c = cameras[i].center();
    (0..cameras.len())
        .filter(|&j| j != i)
        .map(|j| (j, dist(c, cameras[j].center())))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(j, _)| j)
}

/// Pseudo view for parents `(i, j)`: center at the midpoint plus
/// `noise_scale · d · unit_noise` (d = parent distance), rotation halfway
/// along the slerp. Coincident centers keep camera `i`'s rotation.
pub fn pseudo_view_between(
    cameras: &[Camera],
    i: usize,
    j: usize,
    noise_scale: f64,
    unit_noise: [f64; 3],
) -> PseudoView {
    let (a, b) = (&cameras[i], &cameras[j]);
    let (ca, cb) = (a.center(), b.center());
    let d = dist(ca, cb);
    let center: [f64; 3] = std::array::from_fn(|k| 0.5 * (ca[k] + cb[k]) + noise_scale * d * unit_noise[k]);
    let rotation = if d > 1e-12 * (1.0 + ca.iter().map(|v| v.abs()).sum::<f64>()) { slerp(a.rotation, b.rotation, 0.5) } else { a.rotation };
    let cam = Camera {
        intrinsics: a.intrinsics,
        rotation,
        translation: [0.0; 3],
    }
    .with_center(center);
    PseudoView {
        camera: cam,
        parents: [i, j],
    }
}

/// Pick a random training camera and its nearest neighbor, then place a
/// pseudo view between them with Gaussian positional noise.
pub fn sample_pseudo_view<R: Rng + ?Sized>(cameras: &[Camera], rng: &mut R, noise_scale: f64) -> Result<PseudoView> {
    if cameras.len() < 2 {
        return Err(Error::invalid("pseudo views need at least two training cameras"));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::invalid("noise scale must be non-negative"));
    }
    let i = rng.random_range(0..cameras.len());
    let j = nearest_camera(cameras, i).expect("at least two cameras");
    let noise: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    Ok(pseudo_view_between(cameras, i, j, noise_scale, noise))
}

/// Noise-free midpoint views for every distinct nearest-neighbor pair, in
/// order of first appearance. Used for between-field telemetry.
pub fn midpoint_views(cameras: &[Camera]) -> Vec<PseudoView> {
    let mut seen: Vec<[usize; 2]> = Vec::new();
    let mut out = Vec::new();
    for i in 0..cameras.len() {
        let Some(j) = nearest_camera(cameras, i) else { continue };
        let key = [i.min(j), i.max(j)];
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        out.push(pseudo_view_between(cameras, key[0], key[1], 0.0, [0.0; 3]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Intrinsics;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cam_at(center: [f64; 3], rotation: [f64; 4]) -> Camera {
        Camera {
            intrinsics: Intrinsics::from_fov(16, 16, 50.0),
            rotation,
            translation: [0.0; 3],
        }
        .with_center(center)
    }

    fn about_y(deg: f64) -> [f64; 4] {
        let h = deg.to_radians() / 2.0;
        [h.cos(), 0.0, h.sin(), 0.0]
    }

    #[test]
    fn midpoint_without_noise() {
        let cams = [cam_at([0.0; 3], about_y(0.0)), cam_at([2.0, 0.0, 0.0], about_y(0.0))];
        let v = pseudo_view_between(&cams, 0, 1, 0.5, [0.0; 3]);
        let c = v.camera.center();
        assert_relative_eq!(c[0], 1.0, epsilon = 1e-12);
        assert!(c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
    }

    #[test]
    fn identical_rotations_are_preserved() {
        let q = normalize_quat([0.9, 0.1, -0.3, 0.2]);
        let cams = [cam_at([0.0; 3], q), cam_at([1.0, 1.0, 0.0], q)];
        let v = pseudo_view_between(&cams, 0, 1, 0.0, [0.0; 3]);
        for k in 0..4 {
            assert_relative_eq!(v.camera.rotation[k], q[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn halfway_between_zero_and_ninety_degrees() {
        let cams = [cam_at([0.0; 3], about_y(0.0)), cam_at([1.0, 0.0, 0.0], about_y(90.0))];
        let v = pseudo_view_between(&cams, 0, 1, 0.0, [0.0; 3]);
        let e = about_y(45.0);
        for k in 0..4 {
            assert_relative_eq!(v.camera.rotation[k], e[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn opposite_sign_quaternions_take_short_arc() {
        let q = about_y(30.0);
        let r = slerp(q, q.map(|v| -v), 0.5);
        for k in 0..4 {
            assert_relative_eq!(r[k], q[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn coincident_centers_fall_back_to_first_rotation() {
        let cams = [cam_at([1.0; 3], about_y(10.0)), cam_at([1.0; 3], about_y(80.0))];
        let v = pseudo_view_between(&cams, 0, 1, 0.1, [1.0, 0.0, 0.0]);
        assert_eq!(v.camera.rotation, cams[0].rotation);
    }

    #[test]
    fn sampled_view_uses_nearest_pair() {
        let cams = [
            cam_at([0.0; 3], about_y(0.0)),
            cam_at([1.0, 0.0, 0.0], about_y(0.0)),
            cam_at([10.0, 0.0, 0.0], about_y(0.0)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let v = sample_pseudo_view(&cams, &mut rng, 0.05).unwrap();
            assert_ne!(v.parents[0], v.parents[1]);
            assert_eq!(Some(v.parents[1]), nearest_camera(&cams, v.parents[0]));
            let r = v.camera.rotation;
            assert_relative_eq!(r.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(sample_pseudo_view(&cams[..1], &mut rng, 0.05).is_err());
    }
}
