use pronk::config::{ExperimentConfig, PlantModel, StabilityMode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_toml_and_json(
        mass in 1.0f64..50.0,
        k in prop::array::uniform3(500.0f64..5000.0),
        z in 0.12f64..0.3,
        yd in 0.0f64..2.5,
        gamma in 0.0f64..3.0,
        grid in prop::collection::btree_set(-50i32..=50, 1..8),
        slimpod in any::<bool>(),
        gain_mode in any::<bool>(),
    ) {
        let mut c = ExperimentConfig::default();
        c.plant.mass = mass;
        c.plant.stiffness = k;
        c.plant.model = if slimpod { PlantModel::Slimpod } else { PlantModel::Slip };
        c.target.z = z;
        c.target.ydot = yd;
        c.adaptive.gamma = gamma;
        c.sweep.grid_percent = grid.iter().map(|g| f64::from(*g) * 0.97).collect();
        c.stability.mode = if gain_mode { StabilityMode::GainStiffness } else { StabilityMode::Targets };
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        prop_assert_eq!(&back.config, &c);
        prop_assert!(back.defaulted.is_empty());
        let json = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, c);
    }
}
