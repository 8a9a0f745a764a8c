use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    perspective_homography, rotation_homography, GeometryError, Homography, PerspectiveRing,
    RotationLabel, Side, RATIO_TABLE, ROTATION_TABLE,
};

/// Label-conditioned augmentation parameters.
///
/// Rotation draws for a sample labelled `l` are `N(0, rotation_sd[s])` where
/// `s` is picked uniformly from `rotation_sources[l]` (by default just `l`).
/// Perspective draws work the same way over rings, in ratio percent.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentPolicy {
    /// Degrees, indexed by [`RotationLabel::index`].
    pub rotation_sd: [f64; 5],
    /// Degrees, indexed by [`RotationLabel::index`]. Used by the renderer.
    pub rotation_mean: [f64; 5],
    /// Ratio percent, indexed by [`PerspectiveRing::index`].
    pub perspective_sd: [f64; 5],
    /// Fraction of each image dimension.
    pub translation_bound: f64,
    pub simulate_rotations: bool,
    pub simulate_perspectives: bool,
    /// Also warp along x, using `ratio_y * width / height`.
    pub perspective_both_axes: bool,
    pub rotation_sources: [Vec<RotationLabel>; 5],
    pub ring_sources: [Vec<PerspectiveRing>; 5],
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            rotation_sd: ROTATION_TABLE.map(|r| r.sd),
            rotation_mean: ROTATION_TABLE.map(|r| r.mean),
            perspective_sd: RATIO_TABLE.map(|r| r.sd),
            translation_bound: 0.05,
            simulate_rotations: false,
            simulate_perspectives: false,
            perspective_both_axes: true,
            rotation_sources: RotationLabel::ALL.map(|l| vec![l]),
            ring_sources: PerspectiveRing::ALL.map(|r| vec![r]),
        }
    }
}

impl AugmentPolicy {
    /// Translation jitter only.
    pub fn translation_only() -> Self {
        Self::default()
    }

    /// Every sample jittered with the spread of its own label.
    pub fn distribution_matched() -> Self {
        Self {
            simulate_rotations: true,
            simulate_perspectives: true,
            ..Self::default()
        }
    }

    /// Simulates labels missing from training: each included label borrows
    /// the spread of excluded labels on its own side (left/right for
    /// rotations, negative/positive for rings). Neutral samples, or labels
    /// with no excluded neighbour on their side, draw from every excluded
    /// label.
    pub fn simulate_excluded(
        included_rotations: &[RotationLabel],
        included_rings: &[PerspectiveRing],
        augment_rotations: bool,
        augment_perspectives: bool,
    ) -> Self {
        let excluded_rot: Vec<RotationLabel> = RotationLabel::ALL
            .into_iter()
            .filter(|l| !included_rotations.contains(l))
            .collect();
        let rotation_sources = RotationLabel::ALL.map(|l| {
            let same_side: Vec<_> = excluded_rot
                .iter()
                .copied()
                .filter(|e| l.side() != Side::Center && e.side() == l.side())
                .collect();
            match (same_side.is_empty(), excluded_rot.is_empty()) {
                (false, _) => same_side,
                (true, false) => excluded_rot.clone(),
                (true, true) => vec![l],
            }
        });

        let excluded_rings: Vec<PerspectiveRing> = PerspectiveRing::ALL
            .into_iter()
            .filter(|r| !included_rings.contains(r))
            .collect();
        let ring_sources = PerspectiveRing::ALL.map(|r| {
            let same_side: Vec<_> = excluded_rings
                .iter()
                .copied()
                .filter(|e| {
                    (r.is_negative() && e.is_negative()) || (r.is_positive() && e.is_positive())
                })
                .collect();
            match (same_side.is_empty(), excluded_rings.is_empty()) {
                (false, _) => same_side,
                (true, false) => excluded_rings.clone(),
                (true, true) => vec![r],
            }
        });

        Self {
            simulate_rotations: augment_rotations,
            simulate_perspectives: augment_perspectives,
            rotation_sources,
            ring_sources,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let sds = self.rotation_sd.iter().chain(&self.perspective_sd);
        if sds.into_iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(GeometryError::InvalidPolicy(
                "standard deviations must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.translation_bound) {
            return Err(GeometryError::InvalidPolicy(format!(
                "translation bound {} outside [0, 0.5]",
                self.translation_bound
            )));
        }
        if self.rotation_sources.iter().any(Vec::is_empty)
            || self.ring_sources.iter().any(Vec::is_empty)
        {
            return Err(GeometryError::InvalidPolicy("empty source list".into()));
        }
        Ok(())
    }
}

/// One sampled augmentation. Angles in degrees, ratios as signed fractions,
/// shifts in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AugmentDraw {
    pub theta_deg: f64,
    pub ratio_y: f64,
    pub ratio_x: f64,
    pub tx: f64,
    pub ty: f64,
}

/// Largest keystone ratio ever applied; draws beyond it are clipped when the
/// homography is built.
pub const MAX_APPLIED_RATIO: f64 = 0.9;

impl AugmentDraw {
    /// Rotation about the image centre, then keystone, then shift.
    pub fn homography(&self, width: usize, height: usize) -> Result<Homography, GeometryError> {
        let center = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let rot = rotation_homography(self.theta_deg, center);
        let clip = |r: f64| r.clamp(-MAX_APPLIED_RATIO, MAX_APPLIED_RATIO);
        let persp = perspective_homography(clip(self.ratio_y), clip(self.ratio_x), width, height)?;
        let shift = Homography::translation(self.tx, self.ty);
        Ok(shift.after(&persp.after(&rot)))
    }
}

fn pick<T: Copy, R: Rng + ?Sized>(items: &[T], rng: &mut R) -> T {
    if items.len() == 1 {
        items[0]
    } else {
        items[rng.random_range(0..items.len())]
    }
}

/// Draws `(theta, ratio_y, ratio_x, tx, ty)` for one training sample of a
/// `width x height` image.
pub fn sample_augmentation<R: Rng + ?Sized>(
    rotation: RotationLabel,
    ring: PerspectiveRing,
    width: usize,
    height: usize,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> AugmentDraw {
    let mut draw = AugmentDraw::default();
    if policy.simulate_rotations {
        let src = pick(&policy.rotation_sources[rotation.index()], rng);
        let z: f64 = StandardNormal.sample(rng);
        draw.theta_deg = z * policy.rotation_sd[src.index()];
    }
    if policy.simulate_perspectives {
        let src = pick(&policy.ring_sources[ring.index()], rng);
        let z: f64 = StandardNormal.sample(rng);
        draw.ratio_y = z * policy.perspective_sd[src.index()] / 100.0;
        if policy.perspective_both_axes {
            draw.ratio_x = draw.ratio_y * width as f64 / height as f64;
        }
    }
    let b = policy.translation_bound;
    if b > 0.0 {
        draw.tx = rng.random_range(-b..=b) * width as f64;
        draw.ty = rng.random_range(-b..=b) * height as f64;
    }
    draw
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flags_off_only_translates() {
        let policy = AugmentPolicy::translation_only();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let d = sample_augmentation(
                RotationLabel::LeftWide,
                PerspectiveRing::NegativeFar,
                64,
                48,
                &policy,
                &mut rng,
            );
            assert_eq!((d.theta_deg, d.ratio_y, d.ratio_x), (0.0, 0.0, 0.0));
            assert!(d.tx.abs() <= 0.05 * 64.0 && d.ty.abs() <= 0.05 * 48.0);
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let policy = AugmentPolicy::distribution_matched();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| {
                    sample_augmentation(
                        RotationLabel::RightWide,
                        PerspectiveRing::PositiveNear,
                        64,
                        64,
                        &policy,
                        &mut rng,
                    )
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn x_ratio_follows_aspect_rule() {
        let policy = AugmentPolicy::distribution_matched();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = sample_augmentation(
            RotationLabel::Neutral,
            PerspectiveRing::NegativeNear,
            80,
            40,
            &policy,
            &mut rng,
        );
        assert!((d.ratio_x - 2.0 * d.ratio_y).abs() < 1e-15);

        let y_only = AugmentPolicy {
            perspective_both_axes: false,
            ..AugmentPolicy::distribution_matched()
        };
        let d = sample_augmentation(
            RotationLabel::Neutral,
            PerspectiveRing::NegativeNear,
            80,
            40,
            &y_only,
            &mut rng,
        );
        assert_eq!(d.ratio_x, 0.0);
    }

    #[test]
    fn excluded_sources_follow_sides() {
        use RotationLabel::*;
        let p = AugmentPolicy::simulate_excluded(
            &[LeftShallow, Neutral, RightShallow],
            &PerspectiveRing::ALL,
            true,
            false,
        );
        assert_eq!(p.rotation_sources[LeftShallow.index()], vec![LeftWide]);
        assert_eq!(p.rotation_sources[RightShallow.index()], vec![RightWide]);
        assert_eq!(
            p.rotation_sources[Neutral.index()],
            vec![LeftWide, RightWide]
        );
        // Nothing excluded: identity mapping.
        assert_eq!(
            p.ring_sources[PerspectiveRing::NegativeFar.index()],
            vec![PerspectiveRing::NegativeFar]
        );

        let p =
            AugmentPolicy::simulate_excluded(&[Neutral], &[PerspectiveRing::Neutral], true, true);
        assert_eq!(
            p.rotation_sources[Neutral.index()],
            vec![LeftWide, LeftShallow, RightShallow, RightWide]
        );
        assert_eq!(p.ring_sources[PerspectiveRing::Neutral.index()].len(), 4);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn invalid_policies_rejected() {
        let mut p = AugmentPolicy::default();
        p.translation_bound = 0.6;
        assert!(p.validate().is_err());
        let mut p = AugmentPolicy::default();
        p.rotation_sd[0] = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_draw_is_identity() {
        let h = AugmentDraw::default().homography(32, 32).unwrap();
        assert!(h.frobenius_distance(&Homography::IDENTITY) < 1e-15);
    }
}
