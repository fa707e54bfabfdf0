//! Built-in sensor profiles.
//!
//! Feature names follow the public IoT telemetry releases; the waveforms,
//! noise levels and state machines are made up and only need to look
//! plausible.

use super::{CategoricalGenerator, FeatureGenerator, NumericGenerator, SensorProfile};

fn num(name: &str, offset: f64, amplitude: f64, period: f64, phase: f64, noise_sd: f64) -> FeatureGenerator {
    FeatureGenerator::Numeric(NumericGenerator { name: name.into(), offset, amplitude, period, phase, noise_sd })
}

fn cat(name: &str, states: &[&str], stay: f64) -> FeatureGenerator {
    let n = states.len();
    let transitions =
        (0..n).map(|i| (0..n).map(|j| if i == j { stay } else { (1.0 - stay) / (n - 1) as f64 }).collect()).collect();
    FeatureGenerator::Categorical(CategoricalGenerator {
        name: name.into(),
        states: states.iter().map(|s| s.to_string()).collect(),
        transitions,
    })
}

/// The seven sensors, 17 features in total.
pub fn default_profiles() -> Vec<SensorProfile> {
    vec![
        SensorProfile {
            sensor: "fridge_sensor".into(),
            sample_period: 5.0,
            features: vec![
                num("fridge_temperature", 7.0, 3.0, 600.0, 0.0, 0.5),
                cat("temp_condition", &["low", "high"], 0.9),
            ],
        },
        SensorProfile {
            sensor: "gps_tracker_sensor".into(),
            sample_period: 5.0,
            features: vec![
                num("latitude", 116.0, 20.0, 900.0, 0.3, 2.0),
                num("longitude", 10.0, 30.0, 1200.0, 1.1, 3.0),
            ],
        },
        SensorProfile {
            sensor: "motion_light_sensor".into(),
            sample_period: 5.0,
            features: vec![cat("motion_status", &["0", "1"], 0.8), cat("light_status", &["off", "on"], 0.85)],
        },
        SensorProfile {
            sensor: "garage_door_sensor".into(),
            sample_period: 5.0,
            features: vec![cat("door_state", &["closed", "open"], 0.9), cat("sphone_signal", &["false", "true"], 0.85)],
        },
        SensorProfile {
            sensor: "modbus_sensor".into(),
            sample_period: 5.0,
            features: vec![
                num("fc1_read_input_register", 32000.0, 12000.0, 700.0, 0.0, 1500.0),
                num("fc2_read_discrete_value", 32000.0, 10000.0, 800.0, 0.9, 1500.0),
                num("fc3_read_holding_register", 32000.0, 14000.0, 1000.0, 1.7, 1500.0),
                num("fc4_read_coil", 32000.0, 11000.0, 650.0, 2.4, 1500.0),
            ],
        },
        SensorProfile {
            sensor: "thermostat_sensor".into(),
            sample_period: 5.0,
            features: vec![
                num("current_temperature", 22.0, 4.0, 1500.0, 0.5, 0.6),
                cat("thermostat_status", &["0", "1"], 0.9),
            ],
        },
        SensorProfile {
            sensor: "weather_sensor".into(),
            sample_period: 5.0,
            features: vec![
                num("temperature", 30.0, 8.0, 2000.0, 0.2, 1.0),
                num("pressure", 1.0, 3.0, 1700.0, 2.0, 0.5),
                num("humidity", 50.0, 25.0, 1300.0, 0.7, 3.0),
            ],
        },
    ]
}
