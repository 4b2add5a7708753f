//! Bundled participant cohort: the eight per-eye visual-field diameter
//! pairs used as reference fixtures, and a ready-made 16-participant
//! study configuration (eight "patient" fields used directly, eight
//! age-matched "simulated" participants whose fields are measured by
//! kinetic perimetry and whose masks run under the display latency
//! model).

use crate::agents::{AgentConfig, Policy};
use crate::mask::LatencyModel;
use crate::model::VisualFieldProfile;
use crate::perimetry::ResponderModel;
use crate::study::{GroupConfig, ParticipantConfig, SessionRamp, StudyConfig, VfSource};
use crate::Result;

/// Per-eye field diameters in degrees (right eye, left eye) for the eight
/// reference participants.
pub const FIELD_DIAMETERS: [(f64, f64); 8] = [
    (7.62, 8.26),
    (18.64, 18.18),
    (17.64, 16.36),
    (24.60, 25.40),
    (18.54, 18.34),
    (10.92, 9.64),
    (12.18, 14.56),
    (20.00, 19.48),
];

/// Circular per-eye profiles built from the bundled diameters.
pub fn reference_profiles() -> Vec<VisualFieldProfile> {
    FIELD_DIAMETERS
        .iter()
        .enumerate()
        .map(|(i, &(re, le))| {
            VisualFieldProfile::circular_per_eye(format!("p{}", i + 1), le / 2.0, re / 2.0)
                .expect("bundled diameters are in range")
        })
        .collect()
}

/// The default 16-participant study: group A uses the reference fields
/// directly with zero display latency (the field is physiological);
/// group B simulates the same fields through perimetry measurement and a
/// gaze-contingent mask with 79 ms eye / 5 ms head latency.
pub fn default_study(seed: u64) -> Result<StudyConfig> {
    let agent = AgentConfig {
        policy: Policy::Pursuit,
        ..AgentConfig::default()
    };
    let mut group_a = GroupConfig {
        label: "A".into(),
        participants: Vec::new(),
    };
    let mut group_b = GroupConfig {
        label: "B".into(),
        participants: Vec::new(),
    };
    for (i, profile) in reference_profiles().into_iter().enumerate() {
        group_a.participants.push(ParticipantConfig {
            id: format!("p{}", i + 1),
            vf: VfSource::Profile(profile.clone()),
            agent,
            latency: LatencyModel::ZERO,
            user_invalid_rate: 0.002,
            session_ramp: SessionRamp::default(),
        });
        let truth = VisualFieldProfile::new(
            format!("p{}b", i + 1),
            profile.left,
            profile.right,
        )?;
        group_b.participants.push(ParticipantConfig {
            id: format!("p{}b", i + 1),
            vf: VfSource::Measured {
                truth,
                responder: ResponderModel {
                    reaction_delay: 0.2,
                    fixation_noise: 0.3,
                    seed: 0,
                },
            },
            agent,
            latency: LatencyModel::default(),
            user_invalid_rate: 0.002,
            session_ramp: SessionRamp::default(),
        });
    }
    let cfg = StudyConfig {
        groups: vec![group_a, group_b],
        seed,
        ..StudyConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_reference_profiles_in_range() {
        let profiles = reference_profiles();
        assert_eq!(profiles.len(), 8);
        // mean diameters match the bundled table
        for (p, &(re, le)) in profiles.iter().zip(&FIELD_DIAMETERS) {
            approx::assert_abs_diff_eq!(p.right[0] * 2.0, re, epsilon = 1e-12);
            approx::assert_abs_diff_eq!(p.left[0] * 2.0, le, epsilon = 1e-12);
        }
    }

    #[test]
    fn default_study_validates() {
        let cfg = default_study(42).unwrap();
        assert_eq!(cfg.groups.len(), 2);
        assert_eq!(cfg.groups[0].participants.len(), 8);
        assert_eq!(cfg.groups[1].participants.len(), 8);
        assert_eq!(cfg.sessions, 20);
        assert_eq!(cfg.session_minutes, 30.0);
    }
}
