//! Jerk-limited braking profile executed after the latch.

use serde::{Deserialize, Serialize};

/// Deceleration ramps from its value at the latch `d0` up to `decel` at
/// `jerk`, holds, then ramps out to zero exactly at standstill. Short stops
/// never reach `decel`; very short ones with a high `d0` only ramp out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeStopPlan {
    pub v0: f64,
    /// Deceleration already applied at the latch.
    pub d0: f64,
    pub jerk: f64,
    pub decel: f64,
    /// Peak deceleration actually reached.
    pub peak: f64,
    /// End of the ramp-in.
    pub t1: f64,
    /// End of the hold.
    pub t2: f64,
    /// Time to standstill.
    pub t_stop: f64,
}

impl SafeStopPlan {
    /// Plan from rest deceleration.
    pub fn new(v0: f64, jerk: f64, decel: f64) -> Self {
        Self::with_initial_decel(v0, 0.0, jerk, decel)
    }

    pub fn with_initial_decel(v0: f64, d0: f64, jerk: f64, decel: f64) -> Self {
        let v0 = v0.max(0.0);
        let d0 = d0.clamp(0.0, decel);
        let j = jerk;
        if v0 < d0 * d0 / (2.0 * j) {
            // Ramping out from d0 already overshoots: stop while ramping.
            let t = (d0 - (d0 * d0 - 2.0 * j * v0).max(0.0).sqrt()) / j;
            return SafeStopPlan {
                v0,
                d0,
                jerk,
                decel,
                peak: d0,
                t1: 0.0,
                t2: 0.0,
                t_stop: t,
            };
        }
        let peak = decel.min((j * v0 + d0 * d0 / 2.0).sqrt());
        let t1 = (peak - d0) / j;
        let dv1 = (peak * peak - d0 * d0) / (2.0 * j);
        let dv3 = peak * peak / (2.0 * j);
        let hold = if peak > 0.0 { ((v0 - dv1 - dv3) / peak).max(0.0) } else { 0.0 };
        SafeStopPlan {
            v0,
            d0,
            jerk,
            decel,
            peak,
            t1,
            t2: t1 + hold,
            t_stop: t1 + hold + peak / j,
        }
    }

    fn ramp_only(&self) -> bool {
        self.t2 == 0.0 && self.d0 > 0.0 && self.peak == self.d0 && self.t_stop < self.d0 / self.jerk
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let j = self.jerk;
        if t <= 0.0 {
            return self.v0;
        }
        if t >= self.t_stop {
            return 0.0;
        }
        if self.ramp_only() {
            return (self.v0 - self.d0 * t + j * t * t / 2.0).max(0.0);
        }
        if t <= self.t1 {
            self.v0 - self.d0 * t - j * t * t / 2.0
        } else if t <= self.t2 {
            let v1 = self.v0 - (self.peak * self.peak - self.d0 * self.d0) / (2.0 * j);
            v1 - self.peak * (t - self.t1)
        } else {
            j * (self.t_stop - t) * (self.t_stop - t) / 2.0
        }
    }

    /// Distance covered until standstill.
    pub fn distance(&self) -> f64 {
        let (j, d0, v0) = (self.jerk, self.d0, self.v0);
        if self.ramp_only() {
            let t = self.t_stop;
            return v0 * t - d0 * t * t / 2.0 + j * t * t * t / 6.0;
        }
        let t1 = self.t1;
        let v1 = v0 - (self.peak * self.peak - d0 * d0) / (2.0 * j);
        let th = self.t2 - self.t1;
        let t3 = self.t_stop - self.t2;
        (v0 * t1 - d0 * t1 * t1 / 2.0 - j * t1 * t1 * t1 / 6.0)
            + (v1 * th - self.peak * th * th / 2.0)
            + j * t3 * t3 * t3 / 6.0
    }

    /// Acceleration to command on the `k`-th tick after the latch so that
    /// an Euler-integrated speed follows the profile sample for sample.
    pub fn accel_for_tick(&self, k: u64, dt: f64) -> f64 {
        let t = k as f64 * dt;
        if t >= self.t_stop {
            return -self.decel;
        }
        (self.speed_at(t + dt) - self.speed_at(t)) / dt
    }
}

/// Closed-form braking distance from rest deceleration at speed `v`.
pub fn stopping_distance(v: f64, jerk: f64, decel: f64) -> f64 {
    SafeStopPlan::new(v, jerk, decel).distance()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(p: &SafeStopPlan) -> f64 {
        let h = 1e-5;
        let n = (p.t_stop / h).ceil() as usize + 10;
        (0..n).map(|k| 0.5 * (p.speed_at(k as f64 * h) + p.speed_at((k + 1) as f64 * h)) * h).sum()
    }

    #[test]
    fn distance_matches_numeric_integral() {
        for v in [0.05, 0.1, 1.0, 3.0, 3.6, 5.0, 10.0, 15.0, 30.0] {
            for d0 in [0.0, 1.0, 3.0, 6.0] {
                let p = SafeStopPlan::with_initial_decel(v, d0, 10.0, 6.0);
                assert!((p.distance() - integrate(&p)).abs() < 1e-6, "v={v} d0={d0}");
            }
        }
    }

    #[test]
    fn trapezoid_distance_closed_form() {
        let v: f64 = 10.0;
        let d = v * v / 12.0 + v * 6.0 / 20.0;
        assert!((stopping_distance(v, 10.0, 6.0) - d).abs() < 1e-12);
        // Triangle: v sqrt(v / J).
        let v: f64 = 2.0;
        assert!((stopping_distance(v, 10.0, 6.0) - v * (v / 10.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn initial_decel_only_shortens_the_stop() {
        for v in [0.5, 2.0, 8.0, 20.0] {
            let cold = SafeStopPlan::new(v, 10.0, 6.0);
            let mut prev = cold.distance();
            for d0 in [1.0, 2.0, 4.0, 6.0] {
                let warm = SafeStopPlan::with_initial_decel(v, d0, 10.0, 6.0);
                assert!(warm.distance() <= prev + 1e-12, "v={v} d0={d0}");
                prev = warm.distance();
            }
        }
        // Already at full braking: only the ramp-out adds to v²/2A.
        let p = SafeStopPlan::with_initial_decel(10.0, 6.0, 10.0, 6.0);
        assert!((p.distance() - (100.0 / 12.0 + 216.0 / 2400.0)).abs() < 1e-12);
    }

    #[test]
    fn speed_is_continuous_and_monotone() {
        for (v, d0) in [(1.0, 0.0), (3.6, 0.0), (12.0, 0.0), (12.0, 6.0), (0.5, 5.0), (4.0, 3.0)] {
            let p = SafeStopPlan::with_initial_decel(v, d0, 10.0, 6.0);
            let mut prev = p.speed_at(0.0);
            for k in 1..40000 {
                let s = p.speed_at(k as f64 * 1e-4);
                assert!(s <= prev + 1e-12 && prev - s < 1e-3, "v={v} d0={d0} k={k}");
                prev = s;
            }
            assert_eq!(p.speed_at(p.t_stop + 1.0), 0.0);
        }
    }

    #[test]
    fn euler_commands_reproduce_profile_and_respect_limits() {
        let dt = 0.01;
        for d0 in [0.0, 6.0] {
            let p = SafeStopPlan::with_initial_decel(10.0, d0, 10.0, 6.0);
            let mut v = 10.0;
            for k in 0..400u64 {
                let a = p.accel_for_tick(k, dt);
                assert!(a <= 0.0 && a >= -6.0 - 1e-9);
                v = f64::max(v + a * dt, 0.0);
                assert!((v - p.speed_at((k + 1) as f64 * dt)).abs() < 1e-9);
            }
            assert_eq!(v, 0.0);
        }
    }
}
