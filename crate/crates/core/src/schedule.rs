//! Modulating-factor (γ) annealing over training epochs.
//!
//! γ is evaluated once per epoch with `z` the number of completed epochs, so
//! the first epoch trains with `gamma_at(0) == gamma_init`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    Constant,
    LinearDecay,
    LinearGrowth,
    ExpDecay,
    ExpGrowth,
}

impl GammaMode {
    pub fn is_exponential(self) -> bool {
        matches!(self, GammaMode::ExpDecay | GammaMode::ExpGrowth)
    }

    pub fn is_decay(self) -> bool {
        matches!(self, GammaMode::LinearDecay | GammaMode::ExpDecay)
    }

    pub fn is_growth(self) -> bool {
        matches!(self, GammaMode::LinearGrowth | GammaMode::ExpGrowth)
    }

    pub fn name(self) -> &'static str {
        match self {
            GammaMode::Constant => "constant",
            GammaMode::LinearDecay => "linear_decay",
            GammaMode::LinearGrowth => "linear_growth",
            GammaMode::ExpDecay => "exp_decay",
            GammaMode::ExpGrowth => "exp_growth",
        }
    }
}

impl std::str::FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "constant" => GammaMode::Constant,
            "linear_decay" => GammaMode::LinearDecay,
            "linear_growth" => GammaMode::LinearGrowth,
            "exp_decay" => GammaMode::ExpDecay,
            "exp_growth" => GammaMode::ExpGrowth,
            other => return Err(Error::Config(format!("unknown gamma schedule mode `{other}`"))),
        })
    }
}

/// A validated γ profile. Construct with [`GammaSchedule::new`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaSchedule<T> {
    mode: GammaMode,
    gamma_init: T,
    gamma_fin: T,
    total_epochs: usize,
}

impl<T: Scalar> GammaSchedule<T> {
    pub fn new(mode: GammaMode, gamma_init: T, gamma_fin: T, total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(Error::Config("schedule horizon must be at least one epoch".into()));
        }
        if !gamma_init.is_finite() || gamma_init < T::zero() {
            return Err(Error::Config(format!("gamma_init must be finite and >= 0, got {gamma_init}")));
        }
        if mode != GammaMode::Constant {
            if !gamma_fin.is_finite() || gamma_fin < T::zero() {
                return Err(Error::Config(format!("gamma_fin must be finite and >= 0, got {gamma_fin}")));
            }
            if mode.is_exponential() && (gamma_init <= T::zero() || gamma_fin <= T::zero()) {
                return Err(Error::Config(format!(
                    "{} requires strictly positive endpoints, got {gamma_init} -> {gamma_fin}",
                    mode.name()
                )));
            }
            if mode.is_decay() && gamma_init < gamma_fin {
                return Err(Error::Config(format!(
                    "{} requires gamma_init >= gamma_fin, got {gamma_init} -> {gamma_fin}",
                    mode.name()
                )));
            }
            if mode.is_growth() && gamma_init > gamma_fin {
                return Err(Error::Config(format!(
                    "{} requires gamma_init <= gamma_fin, got {gamma_init} -> {gamma_fin}",
                    mode.name()
                )));
            }
        }
        Ok(Self {
            mode,
            gamma_init,
            gamma_fin,
            total_epochs,
        })
    }

    pub fn constant(gamma: T, total_epochs: usize) -> Result<Self> {
        Self::new(GammaMode::Constant, gamma, gamma, total_epochs)
    }

    /// Exponential decay 2 → 0.1 over 20 epochs.
    pub fn default_exp_decay() -> Self {
        Self::new(GammaMode::ExpDecay, T::lit(2.0), T::lit(0.1), 20).expect("valid default")
    }

    pub fn mode(&self) -> GammaMode {
        self.mode
    }

    pub fn gamma_init(&self) -> T {
        self.gamma_init
    }

    pub fn gamma_fin(&self) -> T {
        self.gamma_fin
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// γ after `z` completed epochs, `0 <= z <= total_epochs`.
    pub fn gamma_at(&self, z: usize) -> Result<T> {
        if z > self.total_epochs {
            return Err(Error::OutOfRange {
                z,
                horizon: self.total_epochs,
            });
        }
        let (a, b) = (self.gamma_init, self.gamma_fin);
        if self.mode == GammaMode::Constant || z == 0 {
            return Ok(a);
        }
        if z == self.total_epochs {
            return Ok(b);
        }
        let frac = T::from_count(z) / T::from_count(self.total_epochs);
        let raw = match self.mode {
            GammaMode::Constant => a,
            GammaMode::LinearDecay | GammaMode::LinearGrowth => a + (b - a) * frac,
            GammaMode::ExpDecay | GammaMode::ExpGrowth => {
                if a == b {
                    a
                } else {
                    a * (b / a).powf(frac)
                }
            }
        };
        Ok(raw.max(a.min(b)).min(a.max(b)))
    }

    /// γ for each training epoch `0..total_epochs`.
    pub fn per_epoch(&self) -> Vec<T> {
        (0..self.total_epochs)
            .map(|z| self.gamma_at(z).expect("z within horizon"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(mode: GammaMode, a: f64, b: f64, z: usize) -> GammaSchedule<f64> {
        GammaSchedule::new(mode, a, b, z).unwrap()
    }

    #[test]
    fn worked_values() {
        let s = sched(GammaMode::ExpDecay, 2.0, 0.1, 20);
        assert_eq!(s.gamma_at(0).unwrap(), 2.0);
        assert_eq!(s.gamma_at(20).unwrap(), 0.1);
        // 2 * 0.05^(1/2) = 2 * sqrt(0.05)
        let oracle = 2.0 * 0.05f64.sqrt();
        assert!((oracle - 0.4472135955).abs() < 1e-10);
        assert!((s.gamma_at(10).unwrap() - oracle).abs() < 1e-12);

        let lin = sched(GammaMode::LinearDecay, 2.0, 0.1, 20);
        assert!((lin.gamma_at(10).unwrap() - 1.05).abs() < 1e-12);

        let grow = sched(GammaMode::ExpGrowth, 0.1, 2.0, 20);
        let oracle = 0.1 * 20f64.sqrt();
        assert!((grow.gamma_at(10).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_epoch() {
        let s = sched(GammaMode::ExpDecay, 2.0, 0.1, 20);
        assert!(matches!(s.gamma_at(21), Err(Error::OutOfRange { z: 21, horizon: 20 })));
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(GammaSchedule::new(GammaMode::ExpDecay, 2.0, 0.0, 20).is_err());
        assert!(GammaSchedule::new(GammaMode::ExpGrowth, 0.0, 2.0, 20).is_err());
        assert!(GammaSchedule::new(GammaMode::LinearDecay, 0.1, 2.0, 20).is_err());
        assert!(GammaSchedule::new(GammaMode::LinearGrowth, 2.0, 0.1, 20).is_err());
        assert!(GammaSchedule::new(GammaMode::Constant, 1.0, 0.0, 0).is_err());
        assert!(GammaSchedule::new(GammaMode::Constant, -1.0, 0.0, 3).is_err());
        // constant ignores gamma_fin entirely
        assert!(GammaSchedule::new(GammaMode::Constant, 1.0, f64::NAN, 3).is_ok());
        // linear decay may reach zero
        assert!(GammaSchedule::new(GammaMode::LinearDecay, 2.0, 0.0, 3).is_ok());
    }

    #[test]
    fn degenerate_exp_is_constant() {
        let s = sched(GammaMode::ExpDecay, 0.7, 0.7, 9);
        for z in 0..=9 {
            assert_eq!(s.gamma_at(z).unwrap(), 0.7);
        }
    }

    #[test]
    fn per_epoch_has_horizon_entries() {
        let s = GammaSchedule::<f32>::default_exp_decay();
        let g = s.per_epoch();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 2.0);
        assert!(g.windows(2).all(|w| w[1] <= w[0]));
    }

    fn arb_schedule() -> impl Strategy<Value = GammaSchedule<f64>> {
        (0usize..4, 0.01f64..5.0, 0.01f64..5.0, 1usize..60).prop_map(|(m, x, y, z)| {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let (mode, a, b) = match m {
                0 => (GammaMode::LinearDecay, hi, lo),
                1 => (GammaMode::LinearGrowth, lo, hi),
                2 => (GammaMode::ExpDecay, hi, lo),
                _ => (GammaMode::ExpGrowth, lo, hi),
            };
            GammaSchedule::new(mode, a, b, z).unwrap()
        })
    }

    proptest! {
        #[test]
        fn endpoints_monotone_and_bounded(s in arb_schedule()) {
            let z_max = s.total_epochs();
            prop_assert!((s.gamma_at(0).unwrap() - s.gamma_init()).abs() <= 1e-12);
            prop_assert!((s.gamma_at(z_max).unwrap() - s.gamma_fin()).abs() <= 1e-12);
            let lo = s.gamma_init().min(s.gamma_fin());
            let hi = s.gamma_init().max(s.gamma_fin());
            let values: Vec<f64> = (0..=z_max).map(|z| s.gamma_at(z).unwrap()).collect();
            for v in &values {
                prop_assert!(*v >= lo && *v <= hi);
            }
            for w in values.windows(2) {
                if s.mode().is_decay() {
                    prop_assert!(w[1] <= w[0]);
                } else {
                    prop_assert!(w[1] >= w[0]);
                }
            }
        }

        #[test]
        fn exp_decay_mirrors_exp_growth(a in 0.01f64..5.0, b in 0.01f64..5.0, z_max in 1usize..60) {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let decay = sched(GammaMode::ExpDecay, hi, lo, z_max);
            let growth = sched(GammaMode::ExpGrowth, lo, hi, z_max);
            for z in 0..=z_max {
                let d = decay.gamma_at(z).unwrap();
                let g = growth.gamma_at(z_max - z).unwrap();
                prop_assert!((d - g).abs() <= 1e-12, "z={} {} vs {}", z, d, g);
            }
        }
    }
}
