//! Built-in configurations: the paper-scale figure setups and desk-scale
//! twins that keep the antenna ratios and run in seconds to minutes.
//!
//! Desk twins raise the transmit power: with per-entry channel variance
//! equal to the path loss, the paper-scale powers leave the detector at a
//! normalized noise level where nothing can be detected.

use crate::config::ExperimentConfig;
use crate::error::CliError;

const FIG4_LEFT: &str = r#"
[experiment]
kind = "mse-vs-iteration"
trials = 20
seed = 1

[system]
n = 512
m = 512
k = 64
pilots = 40
q = 1000
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = false
power_dbm = 12

[receiver]
coded = false
max_iter = 10
"#;

const FIG4_LEFT_DESK: &str = r#"
[experiment]
kind = "mse-vs-iteration"
trials = 20
seed = 1

[system]
n = 256
m = 256
k = 32
pilots = 20
q = 64
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = false
power_dbm = 32.5

[receiver]
coded = false
max_iter = 10

[se]
samples = 50000
"#;

const FIG4_RIGHT: &str = r#"
[experiment]
kind = "mse-vs-iteration"
trials = 20
seed = 1

[system]
n = 512
m = 512
k = 64
pilots = 40
q = 1000
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = true
power_dbm = 6

[receiver]
coded = true
max_iter = 10
"#;

const FIG4_RIGHT_DESK: &str = r#"
[experiment]
kind = "mse-vs-iteration"
trials = 20
seed = 1

[system]
n = 256
m = 256
k = 32
pilots = 20
q = 64
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = true
power_dbm = 25

[receiver]
coded = true
max_iter = 10

[se]
samples = 20000
"#;

const FIG5_LEFT: &str = r#"
[experiment]
kind = "ber-vs-power"
trials = 20
seed = 1

[system]
n = 512
m = 512
k = 64
pilots = 40
q = 1000
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = false
power_sweep_dbm = [4, 6, 8, 10, 12]

[receiver]
coded = false
max_iter = 30
genie_bounds = true
"#;

const FIG5_LEFT_DESK: &str = r#"
[experiment]
kind = "ber-vs-power"
trials = 20
seed = 1

[system]
n = 128
m = 128
k = 16
pilots = 10
q = 32
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = false
power_sweep_dbm = [32, 34, 36, 38, 40]

[receiver]
coded = false
max_iter = 30
genie_bounds = true
"#;

const FIG5_RIGHT: &str = r#"
[experiment]
kind = "ber-vs-power"
trials = 20
seed = 1

[system]
n = 512
m = 512
k = 64
pilots = 40
q = 1000
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = true
power_sweep_dbm = [0, 2, 4, 6, 8]
csi_nmse_db = -20

[receiver]
coded = true
max_iter = 30
genie_bounds = true
compare_uncoded = true
"#;

const FIG5_RIGHT_DESK: &str = r#"
[experiment]
kind = "ber-vs-power"
trials = 20
seed = 1

[system]
n = 128
m = 128
k = 16
pilots = 10
q = 32
t = 2
tx = "qpsk"
ris_phases = 2

[link]
direct = true
power_sweep_dbm = [24, 26, 28, 30, 32]
csi_nmse_db = -20

[receiver]
coded = true
max_iter = 30
genie_bounds = true
compare_uncoded = true
"#;

const FIG6_LEFT: &str = r#"
[experiment]
kind = "rate-vs-N"
seed = 1

[system]
m = 512
k = 64
pilots = 40
t = 1
tx = "16qam"
ris_phases = 2

[link]
direct = true
power_dbm = 8
n_sweep = [100, 200, 300, 400, 500, 600, 700, 800]

[se]
samples = 100000

[rate]
lattice = 16
paths = 10
"#;

const FIG6_LEFT_DESK: &str = r#"
[experiment]
kind = "rate-vs-N"
seed = 1

[system]
m = 128
k = 16
pilots = 8
t = 1
tx = "16qam"
ris_phases = 2

[link]
direct = true
power_dbm = 34
n_sweep = [64, 128, 192, 256]

[se]
samples = 10000
max_iter = 60

[rate]
lattice = 8
paths = 10
"#;

const FIG6_RIGHT: &str = r#"
[experiment]
kind = "rate-vs-N"
seed = 1

[system]
m = 512
k = 64
pilots = 40
t = 1
tx = "64qam"
ris_phases = 4

[link]
direct = true
power_dbm = 12
n_sweep = [100, 200, 300, 400, 500, 600, 700, 800]

[se]
samples = 100000

[rate]
lattice = 16
paths = 10
"#;

const FIG6_RIGHT_DESK: &str = r#"
[experiment]
kind = "rate-vs-N"
seed = 1

[system]
m = 128
k = 16
pilots = 8
t = 1
tx = "64qam"
ris_phases = 4

[link]
direct = true
power_dbm = 38
n_sweep = [64, 128, 192, 256]

[se]
samples = 10000
max_iter = 60

[rate]
lattice = 8
paths = 10
"#;

const PRESETS: [(&str, &str); 12] = [
    ("fig4-left", FIG4_LEFT),
    ("fig4-left-desk", FIG4_LEFT_DESK),
    ("fig4-right", FIG4_RIGHT),
    ("fig4-right-desk", FIG4_RIGHT_DESK),
    ("fig5-left", FIG5_LEFT),
    ("fig5-left-desk", FIG5_LEFT_DESK),
    ("fig5-right", FIG5_RIGHT),
    ("fig5-right-desk", FIG5_RIGHT_DESK),
    ("fig6-left", FIG6_LEFT),
    ("fig6-left-desk", FIG6_LEFT_DESK),
    ("fig6-right", FIG6_RIGHT),
    ("fig6-right-desk", FIG6_RIGHT_DESK),
];

pub fn list_presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load_preset(name: &str) -> Result<ExperimentConfig, CliError> {
    match preset_text(name) {
        Some(t) => ExperimentConfig::from_str(t),
        None => Err(CliError::Config(vec![crate::error::ConfigIssue::new("--preset", format!("unknown preset '{name}'; try one of {}", list_presets().join(", ")))])),
    }
}
