use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::angle::wrap_angle;
use crate::kinematics::WheelRates;

/// The simulator's random stream. ChaCha output is specified independently
/// of platform and word size.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard-normal draw.
pub fn gaussian(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Encoder reading of the true wheel rates: each wheel gets zero-mean noise
/// with variance `delta * omega^2`. Always consumes two draws (right first).
pub fn simulate_encoders(true_rates: WheelRates, delta: f64, rng: &mut SimRng) -> WheelRates {
    let scale = delta.sqrt();
    let nr = gaussian(rng);
    let nl = gaussian(rng);
    WheelRates {
        omega_l: true_rates.omega_l + scale * true_rates.omega_l.abs() * nl,
        omega_r: true_rates.omega_r + scale * true_rates.omega_r.abs() * nr,
    }
}

/// Compass reading: true heading plus noise, wrapped. Always consumes one draw.
pub fn simulate_compass(true_theta: f64, compass_var: f64, rng: &mut SimRng) -> f64 {
    wrap_angle(true_theta + compass_var.sqrt() * gaussian(rng))
}
