//! Power unit conversions.

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Noise power in watts for a noise spectral density (dBm/Hz) over `bandwidth_hz`.
pub fn noise_power_watts(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(psd_dbm_per_hz + 10.0 * bandwidth_hz.log10())
}
