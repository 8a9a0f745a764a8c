use std::fmt;

use crate::geometry::{PerspectiveRing, RingDistance, RotationLabel};
use crate::network::Head;

use super::{ExperimentError, Result};

/// Which non-neutral rotation bands a spec trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RotationCoverage {
    All,
    Shallow,
    None,
}

/// Which non-neutral rings a spec trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RingCoverage {
    All,
    Near,
    None,
}

impl RotationCoverage {
    pub fn labels(self) -> Vec<RotationLabel> {
        use RotationLabel::*;
        match self {
            RotationCoverage::All => RotationLabel::ALL.to_vec(),
            RotationCoverage::Shallow => vec![LeftShallow, Neutral, RightShallow],
            RotationCoverage::None => vec![Neutral],
        }
    }
}

impl RingCoverage {
    pub fn distances(self) -> Vec<RingDistance> {
        match self {
            RingCoverage::All => vec![RingDistance::Neutral, RingDistance::Near, RingDistance::Far],
            RingCoverage::Near => vec![RingDistance::Neutral, RingDistance::Near],
            RingCoverage::None => vec![RingDistance::Neutral],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Series {
    E,
    A,
    All,
}

/// One row of the exclusion / augmentation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub included_rotations: Vec<RotationLabel>,
    pub included_rings: Vec<RingDistance>,
    pub augment_rotations: bool,
    pub augment_perspectives: bool,
    pub n_trials: usize,
    pub model: Head,
}

pub const DEFAULT_TRIALS: usize = 5;

impl ExperimentSpec {
    fn new(id: &str, rot: RotationCoverage, ring: RingCoverage, aug_rot: bool, aug_persp: bool) -> Self {
        Self {
            id: id.to_string(),
            included_rotations: rot.labels(),
            included_rings: ring.distances(),
            augment_rotations: aug_rot,
            augment_perspectives: aug_persp,
            n_trials: DEFAULT_TRIALS,
            model: Head::Hvc,
        }
    }

    pub fn with_model(&self, model: Head) -> Self {
        Self {
            model,
            ..self.clone()
        }
    }

    pub fn with_trials(&self, n_trials: usize) -> Self {
        Self {
            n_trials,
            ..self.clone()
        }
    }

    pub fn series(&self) -> Series {
        match self.id.as_bytes().first() {
            Some(b'E') => Series::E,
            Some(b'A') if self.id != "ALL" => Series::A,
            _ => Series::All,
        }
    }

    pub fn includes_rotation(&self, label: RotationLabel) -> bool {
        label == RotationLabel::Neutral || self.included_rotations.contains(&label)
    }

    pub fn includes_ring(&self, ring: PerspectiveRing) -> bool {
        ring == PerspectiveRing::Neutral || self.included_rings.contains(&ring.distance())
    }

    /// Included rings expanded to signed rings.
    pub fn signed_rings(&self) -> Vec<PerspectiveRing> {
        PerspectiveRing::ALL
            .into_iter()
            .filter(|&r| self.includes_ring(r))
            .collect()
    }

    /// Checkmarks in column order: rotations LW, LS, RS, RW, then
    /// perspectives NF, NN, PN, PF.
    pub fn checkmarks(&self) -> [bool; 8] {
        use PerspectiveRing as P;
        use RotationLabel as R;
        [
            self.includes_rotation(R::LeftWide),
            self.includes_rotation(R::LeftShallow),
            self.includes_rotation(R::RightShallow),
            self.includes_rotation(R::RightWide),
            self.includes_ring(P::NegativeFar),
            self.includes_ring(P::NegativeNear),
            self.includes_ring(P::PositiveNear),
            self.includes_ring(P::PositiveFar),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = || ExperimentError::InvalidSpec(self.id.clone());
        if !self.included_rotations.contains(&RotationLabel::Neutral)
            || !self.included_rings.contains(&RingDistance::Neutral)
        {
            return Err(bad());
        }
        if self.series() == Series::E && (self.augment_rotations || self.augment_perspectives) {
            return Err(bad());
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.id, self.model.model_name())
    }
}

/// The nine exclusion-only experiments, E1..E9.
pub fn e_series() -> Vec<ExperimentSpec> {
    use RingCoverage as G;
    use RotationCoverage as R;
    let rows = [
        (R::All, G::All),
        (R::All, G::Near),
        (R::All, G::None),
        (R::Shallow, G::All),
        (R::Shallow, G::Near),
        (R::Shallow, G::None),
        (R::None, G::All),
        (R::None, G::Near),
        (R::None, G::None),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(r, g))| ExperimentSpec::new(&format!("E{}", i + 1), r, g, false, false))
        .collect()
}

/// The sixteen augmented experiments, A1..A16.
pub fn a_series() -> Vec<ExperimentSpec> {
    use RingCoverage as G;
    use RotationCoverage as R;
    let rows = [
        (R::All, G::Near, false, true),
        (R::All, G::None, false, true),
        (R::Shallow, G::All, true, false),
        (R::Shallow, G::Near, true, true),
        (R::Shallow, G::Near, true, false),
        (R::Shallow, G::Near, false, true),
        (R::Shallow, G::None, true, true),
        (R::Shallow, G::None, true, false),
        (R::Shallow, G::None, false, true),
        (R::None, G::All, true, false),
        (R::None, G::Near, true, true),
        (R::None, G::Near, true, false),
        (R::None, G::Near, false, true),
        (R::None, G::None, true, true),
        (R::None, G::None, true, false),
        (R::None, G::None, false, true),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(r, g, ar, ap))| ExperimentSpec::new(&format!("A{}", i + 1), r, g, ar, ap))
        .collect()
}

/// Everything included, both augmentations on.
pub fn all_spec() -> ExperimentSpec {
    ExperimentSpec::new("ALL", RotationCoverage::All, RingCoverage::All, true, true)
}

/// E1..E9, A1..A16, ALL.
pub fn catalog() -> Vec<ExperimentSpec> {
    let mut v = e_series();
    v.extend(a_series());
    v.push(all_spec());
    v
}

pub fn valid_ids() -> Vec<String> {
    catalog().into_iter().map(|s| s.id).collect()
}

pub fn lookup(id: &str) -> Result<ExperimentSpec> {
    let wanted = id.trim().to_ascii_uppercase();
    catalog()
        .into_iter()
        .find(|s| s.id == wanted)
        .ok_or_else(|| ExperimentError::UnknownSpec(id.to_string()))
}

/// The A experiments trained on the same subset as an E experiment.
pub fn counterparts(e_id: &str) -> Vec<ExperimentSpec> {
    let Ok(e) = lookup(e_id) else {
        return Vec::new();
    };
    if e.series() != Series::E {
        return Vec::new();
    }
    a_series()
        .into_iter()
        .filter(|a| {
            a.included_rotations == e.included_rotations && a.included_rings == e.included_rings
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_ids_in_order() {
        let ids = valid_ids();
        assert_eq!(ids.len(), 26);
        assert_eq!(ids[0], "E1");
        assert_eq!(ids[9], "A1");
        assert_eq!(ids[25], "ALL");
        for s in catalog() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn lookup_is_case_insensitive_and_rejects_unknown() {
        assert_eq!(lookup("a5").unwrap().id, "A5");
        assert!(matches!(lookup("E10"), Err(ExperimentError::UnknownSpec(_))));
    }

    #[test]
    fn series_flags() {
        assert!(e_series().iter().all(|s| !s.augment_rotations && !s.augment_perspectives));
        let all = all_spec();
        assert_eq!(all.series(), Series::All);
        assert!(all.augment_rotations && all.augment_perspectives);
        assert_eq!(all.checkmarks(), [true; 8]);
    }
}
