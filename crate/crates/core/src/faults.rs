//! Scheduled faults on sensor frames and channel commands.
//!
//! Faults are declared in the scenario document and are the only way to
//! perturb a run. Active faults on one target are applied in declaration
//! order; that order is part of the contract because the kinds do not commute.

use serde::{Deserialize, Serialize};

use crate::command::{ChannelCommand, CommandLimits};
use crate::error::ValidationError;
use crate::sensors::{FramePayload, SensorFrame, SensorParams};

/// Slack used when comparing tick times against window edges.
pub const WINDOW_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Dropout,
    Stuck,
    Bias,
    NoiseScale,
    DeadSector,
    Delay,
    Freeze,
    Silence,
    Offset,
}

impl FaultKind {
    pub fn targets_channel(self) -> bool {
        matches!(self, FaultKind::Freeze | FaultKind::Silence | FaultKind::Offset)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticks: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel: Option<f64>,
}

impl FaultParams {
    pub fn is_empty(&self) -> bool {
        *self == FaultParams::default()
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.offset.is_some() {
            v.push("offset");
        }
        if self.factor.is_some() {
            v.push("factor");
        }
        if self.from.is_some() {
            v.push("from");
        }
        if self.to.is_some() {
            v.push("to");
        }
        if self.ticks.is_some() {
            v.push("ticks");
        }
        if self.steer.is_some() {
            v.push("steer");
        }
        if self.accel.is_some() {
            v.push("accel");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    /// Sensor id or channel id.
    pub target: String,
    pub kind: FaultKind,
    #[serde(default, skip_serializing_if = "FaultParams::is_empty")]
    pub params: FaultParams,
    /// `[start, end)` in seconds.
    pub window: [f64; 2],
}

/// A validated fault with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    Dropout,
    Stuck,
    Bias(f64),
    NoiseScale(f64),
    DeadSector { from: f64, to: f64 },
    Delay(u64),
    Freeze,
    Silence,
    Offset { steer: f64, accel: f64 },
}

/// What a fault target turned out to be during validation.
#[derive(Debug, Clone, Copy)]
pub enum TargetRef<'a> {
    Sensor(&'a SensorParams),
    Channel,
}

impl FaultSpec {
    pub fn is_active(&self, time: f64) -> bool {
        let t = time + WINDOW_EPS;
        self.window[0] <= t && t < self.window[1]
    }

    /// Checks window and parameters against the resolved target and returns the
    /// runtime form.
    pub fn resolve(&self, path: &str, target: TargetRef<'_>) -> Result<Fault, ValidationError> {
        let err = |field: &str, msg: String| Err(ValidationError::new(format!("{path}.{field}"), msg));
        let [start, end] = self.window;
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end) {
            return err("window", "must satisfy 0 <= start < end".into());
        }
        match (self.kind.targets_channel(), target) {
            (true, TargetRef::Sensor(_)) => {
                return err("target", format!("`{:?}` faults apply to channels, `{}` is a sensor", self.kind, self.target));
            }
            (false, TargetRef::Channel) => {
                return err("target", format!("`{:?}` faults apply to sensors, `{}` is a channel", self.kind, self.target));
            }
            _ => {}
        }

        let p = &self.params;
        let allowed: &[&str] = match self.kind {
            FaultKind::Bias => &["offset"],
            FaultKind::NoiseScale => &["factor"],
            FaultKind::DeadSector => &["from", "to"],
            FaultKind::Delay => &["ticks"],
            FaultKind::Offset => &["steer", "accel"],
            _ => &[],
        };
        if let Some(extra) = p.present().into_iter().find(|k| !allowed.contains(k)) {
            return err(&format!("params.{extra}"), format!("not a parameter of `{:?}`", self.kind));
        }
        let need = |v: Option<f64>, name: &str| -> Result<f64, ValidationError> {
            match v {
                Some(x) if x.is_finite() => Ok(x),
                Some(_) => Err(ValidationError::new(format!("{path}.params.{name}"), "must be finite")),
                None => Err(ValidationError::new(format!("{path}.params.{name}"), "is required")),
            }
        };

        Ok(match self.kind {
            FaultKind::Dropout => Fault::Dropout,
            FaultKind::Stuck => Fault::Stuck,
            FaultKind::Freeze => Fault::Freeze,
            FaultKind::Silence => Fault::Silence,
            FaultKind::Bias => Fault::Bias(need(p.offset, "offset")?),
            FaultKind::NoiseScale => {
                let f = need(p.factor, "factor")?;
                if f < 0.0 {
                    return err("params.factor", "must be >= 0".into());
                }
                Fault::NoiseScale(f)
            }
            FaultKind::DeadSector => {
                let from = need(p.from, "from")?;
                let to = need(p.to, "to")?;
                if from > to {
                    return err("params", "dead sector needs from <= to".into());
                }
                let fov = match target {
                    TargetRef::Sensor(sp @ (SensorParams::Lidar(_) | SensorParams::Camera(_) | SensorParams::Radar(_))) => {
                        sp.fov().unwrap_or_default()
                    }
                    _ => return err("kind", "dead_sector applies to lidar, camera and radar sensors".into()),
                };
                if from < -fov / 2.0 - WINDOW_EPS || to > fov / 2.0 + WINDOW_EPS {
                    return err("params", format!("interval [{from}, {to}] is outside the sensor fov ±{}", fov / 2.0));
                }
                Fault::DeadSector { from, to }
            }
            FaultKind::Delay => match p.ticks {
                Some(k) if k >= 1 => Fault::Delay(k),
                Some(_) => return err("params.ticks", "must be >= 1".into()),
                None => return err("params.ticks", "is required".into()),
            },
            FaultKind::Offset => {
                let steer = p.steer.unwrap_or(0.0);
                let accel = p.accel.unwrap_or(0.0);
                if !(steer.is_finite() && accel.is_finite()) {
                    return err("params", "offsets must be finite".into());
                }
                Fault::Offset { steer, accel }
            }
        })
    }
}

/// Indices of the faults whose window contains `time`, in declaration order.
pub fn active_faults(schedule: &[FaultSpec], time: f64) -> Vec<usize> {
    schedule
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_active(time))
        .map(|(i, _)| i)
        .collect()
}

/// Product of the active noise_scale factors.
pub fn noise_scale(faults: &[Fault]) -> f64 {
    faults
        .iter()
        .map(|f| match f {
            Fault::NoiseScale(k) => *k,
            _ => 1.0,
        })
        .product()
}

#[derive(Debug, Clone, Default)]
pub struct SensorHistory {
    pub last_delivered: Option<SensorFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Disposition {
    Deliver(SensorFrame),
    Suppressed,
    /// Deliver at tick `due` instead of now.
    Delayed { due: u64, frame: SensorFrame },
}

/// Applies the active faults of one sensor to a freshly sampled frame.
/// `noise_scale` is not handled here; it acts on the sampler.
pub fn apply_sensor_fault(frame: SensorFrame, faults: &[Fault], history: &SensorHistory) -> Disposition {
    let mut frame = frame;
    let mut delay = 0;
    for f in faults {
        match *f {
            Fault::Dropout => return Disposition::Suppressed,
            Fault::Stuck => match &history.last_delivered {
                Some(prev) => frame = prev.clone(),
                None => return Disposition::Suppressed,
            },
            Fault::Bias(o) => bias(&mut frame.payload, o),
            Fault::DeadSector { from, to } => dead_sector(&mut frame.payload, from, to),
            Fault::Delay(k) => delay += k,
            Fault::NoiseScale(_) | Fault::Freeze | Fault::Silence | Fault::Offset { .. } => {}
        }
    }
    if delay > 0 {
        Disposition::Delayed {
            due: frame.tick + delay,
            frame,
        }
    } else {
        Disposition::Deliver(frame)
    }
}

fn bias(p: &mut FramePayload, o: f64) {
    match p {
        FramePayload::LidarScan { ranges, .. } => {
            for r in ranges.iter_mut().flatten() {
                *r += o;
            }
        }
        FramePayload::ObjectList { detections } => {
            for d in detections {
                let r = d.position.norm();
                if r > 0.0 {
                    d.position = d.position * ((r + o) / r);
                }
            }
        }
        FramePayload::GpsFix { x, y } => {
            *x += o;
            *y += o;
        }
        FramePayload::ImuSample { accel, .. } => *accel += o,
        FramePayload::UltrasonicRange { range } => {
            if let Some(r) = range {
                *r += o;
            }
        }
    }
}

fn dead_sector(p: &mut FramePayload, from: f64, to: f64) {
    let inside = |a: f64| from <= a && a <= to;
    match p {
        FramePayload::LidarScan { angles, ranges } => {
            for (a, r) in angles.iter().zip(ranges.iter_mut()) {
                if inside(*a) {
                    *r = None;
                }
            }
        }
        FramePayload::ObjectList { detections } => detections.retain(|d| !inside(d.bearing())),
        _ => {}
    }
}

/// Whether the channel's command and heartbeat are both suppressed.
pub fn silences(faults: &[Fault]) -> bool {
    faults.iter().any(|f| matches!(f, Fault::Silence))
}

/// Applies the active faults of one channel to what it produced this tick.
/// `last_emitted` is the last command the kernel actually received from it.
pub fn apply_channel_fault(
    cmd: Option<ChannelCommand>,
    faults: &[Fault],
    last_emitted: Option<&ChannelCommand>,
    limits: &CommandLimits,
    tick: u64,
) -> Option<ChannelCommand> {
    let mut cmd = cmd;
    for f in faults {
        match *f {
            Fault::Silence => return None,
            Fault::Freeze => {
                cmd = last_emitted.map(|c| ChannelCommand { tick, ..c.clone() });
            }
            Fault::Offset { steer, accel } => {
                if let Some(c) = cmd.as_mut() {
                    (c.accel, c.steer) = limits.clamp(c.accel + accel, c.steer + steer);
                }
            }
            _ => {}
        }
    }
    cmd
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::{Detection, LidarParams};
    use crate::geom::Vec2;

    fn spec(kind: FaultKind, params: FaultParams, window: [f64; 2]) -> FaultSpec {
        FaultSpec {
            target: "lidar1".into(),
            kind,
            params,
            window,
        }
    }

    fn lidar_frame(tick: u64, ranges: Vec<Option<f64>>) -> SensorFrame {
        let n = ranges.len();
        SensorFrame {
            sensor_id: "lidar1".into(),
            tick,
            payload: FramePayload::LidarScan {
                angles: (0..n).map(|i| i as f64 * 0.1).collect(),
                ranges,
            },
        }
    }

    fn cmd(accel: f64, steer: f64, tick: u64) -> ChannelCommand {
        ChannelCommand {
            channel_id: "nominal".into(),
            priority: 1,
            accel,
            steer,
            tick,
        }
    }

    const LIMITS: CommandLimits = CommandLimits {
        steer_max: 0.6,
        accel_max: 10.0,
    };

    #[test]
    fn windows_are_half_open() {
        let s = vec![spec(FaultKind::Dropout, FaultParams::default(), [1.0, 2.0])];
        assert!(active_faults(&[], 1.5).is_empty());
        assert!(active_faults(&s, 0.99).is_empty());
        assert_eq!(active_faults(&s, 1.0), vec![0]);
        assert_eq!(active_faults(&s, 100.0 * 0.0199), vec![0]);
        assert!(active_faults(&s, 2.0).is_empty());
        assert!(active_faults(&s, 200.0 * 0.01).is_empty());
    }

    #[test]
    fn overlapping_faults_keep_declaration_order() {
        let s = vec![
            spec(FaultKind::Bias, FaultParams { offset: Some(1.0), ..Default::default() }, [0.0, 5.0]),
            spec(FaultKind::Dropout, FaultParams::default(), [1.0, 3.0]),
        ];
        assert_eq!(active_faults(&s, 2.0), vec![0, 1]);
    }

    #[test]
    fn dropout_suppresses() {
        let d = apply_sensor_fault(lidar_frame(0, vec![Some(4.0)]), &[Fault::Dropout], &SensorHistory::default());
        assert_eq!(d, Disposition::Suppressed);
    }

    #[test]
    fn bias_adds_to_ranges() {
        let d = apply_sensor_fault(lidar_frame(0, vec![Some(4.0), None]), &[Fault::Bias(0.5)], &SensorHistory::default());
        assert_eq!(d, Disposition::Deliver(lidar_frame(0, vec![Some(4.5), None])));
    }

    #[test]
    fn stuck_repeats_last_delivered_or_suppresses() {
        let prev = lidar_frame(10, vec![Some(3.0)]);
        let h = SensorHistory {
            last_delivered: Some(prev.clone()),
        };
        assert_eq!(
            apply_sensor_fault(lidar_frame(20, vec![Some(1.0)]), &[Fault::Stuck], &h),
            Disposition::Deliver(prev)
        );
        assert_eq!(
            apply_sensor_fault(lidar_frame(20, vec![Some(1.0)]), &[Fault::Stuck], &SensorHistory::default()),
            Disposition::Suppressed
        );
    }

    #[test]
    fn order_matters_for_stuck_and_bias() {
        let h = SensorHistory {
            last_delivered: Some(lidar_frame(0, vec![Some(3.0)])),
        };
        let f = lidar_frame(1, vec![Some(1.0)]);
        let a = apply_sensor_fault(f.clone(), &[Fault::Bias(1.0), Fault::Stuck], &h);
        let b = apply_sensor_fault(f, &[Fault::Stuck, Fault::Bias(1.0)], &h);
        assert_eq!(a, Disposition::Deliver(lidar_frame(0, vec![Some(3.0)])));
        assert_eq!(b, Disposition::Deliver(lidar_frame(0, vec![Some(4.0)])));
    }

    #[test]
    fn dead_sector_blanks_lidar_and_objects() {
        let d = apply_sensor_fault(
            lidar_frame(0, vec![Some(1.0), Some(1.0), Some(1.0), Some(1.0)]),
            &[Fault::DeadSector { from: 0.05, to: 0.2 }],
            &SensorHistory::default(),
        );
        assert_eq!(d, Disposition::Deliver(lidar_frame(0, vec![Some(1.0), None, None, Some(1.0)])));

        let det = |x: f64, y: f64| Detection {
            position: Vec2::new(x, y),
            heading: 0.0,
            extent: [1.0, 1.0],
            range_rate: None,
        };
        let f = SensorFrame {
            sensor_id: "cam".into(),
            tick: 0,
            payload: FramePayload::ObjectList {
                detections: vec![det(10.0, 0.0), det(10.0, 5.0)],
            },
        };
        let Disposition::Deliver(out) = apply_sensor_fault(f, &[Fault::DeadSector { from: -0.1, to: 0.1 }], &SensorHistory::default())
        else {
            panic!()
        };
        let FramePayload::ObjectList { detections } = out.payload else { panic!() };
        assert_eq!(detections, vec![det(10.0, 5.0)]);
    }

    #[test]
    fn delay_reschedules() {
        let d = apply_sensor_fault(lidar_frame(7, vec![None]), &[Fault::Delay(3)], &SensorHistory::default());
        assert_eq!(
            d,
            Disposition::Delayed {
                due: 10,
                frame: lidar_frame(7, vec![None])
            }
        );
    }

    #[test]
    fn empty_fault_list_is_identity() {
        let f = lidar_frame(3, vec![Some(2.0)]);
        assert_eq!(apply_sensor_fault(f.clone(), &[], &SensorHistory::default()), Disposition::Deliver(f));
        let c = cmd(1.0, 0.1, 3);
        assert_eq!(apply_channel_fault(Some(c.clone()), &[], None, &LIMITS, 3), Some(c));
    }

    #[test]
    fn channel_faults() {
        assert_eq!(apply_channel_fault(Some(cmd(1.0, 0.0, 5)), &[Fault::Silence], None, &LIMITS, 5), None);
        assert_eq!(apply_channel_fault(Some(cmd(1.0, 0.0, 5)), &[Fault::Freeze], None, &LIMITS, 5), None);
        let last = cmd(2.0, 0.2, 4);
        assert_eq!(
            apply_channel_fault(Some(cmd(1.0, 0.0, 5)), &[Fault::Freeze], Some(&last), &LIMITS, 5),
            Some(cmd(2.0, 0.2, 5))
        );
        let off = Fault::Offset { steer: 0.1, accel: 0.0 };
        assert_eq!(
            apply_channel_fault(Some(cmd(1.0, 0.0, 5)), &[off], None, &LIMITS, 5),
            Some(cmd(1.0, 0.1, 5))
        );
        assert_eq!(
            apply_channel_fault(Some(cmd(1.0, 0.55, 5)), &[off], None, &LIMITS, 5),
            Some(cmd(1.0, 0.6, 5))
        );
    }

    #[test]
    fn resolve_checks_kind_params_and_target() {
        let lidar = SensorParams::Lidar(LidarParams {
            fov: 1.0,
            ..Default::default()
        });
        let ok = spec(FaultKind::DeadSector, FaultParams { from: Some(-0.5), to: Some(0.1), ..Default::default() }, [0.0, 1.0]);
        assert_eq!(ok.resolve("faults.0", TargetRef::Sensor(&lidar)).unwrap(), Fault::DeadSector { from: -0.5, to: 0.1 });

        let wide = spec(FaultKind::DeadSector, FaultParams { from: Some(-0.6), to: Some(0.1), ..Default::default() }, [0.0, 1.0]);
        assert!(wide.resolve("faults.0", TargetRef::Sensor(&lidar)).is_err());

        let bad_window = spec(FaultKind::Dropout, FaultParams::default(), [2.0, 2.0]);
        assert_eq!(bad_window.resolve("faults.0", TargetRef::Sensor(&lidar)).unwrap_err().path, "faults.0.window");

        let extra = spec(FaultKind::Dropout, FaultParams { factor: Some(2.0), ..Default::default() }, [0.0, 1.0]);
        assert_eq!(extra.resolve("faults.0", TargetRef::Sensor(&lidar)).unwrap_err().path, "faults.0.params.factor");

        let delay0 = spec(FaultKind::Delay, FaultParams { ticks: Some(0), ..Default::default() }, [0.0, 1.0]);
        assert!(delay0.resolve("faults.0", TargetRef::Sensor(&lidar)).is_err());

        let neg = spec(FaultKind::NoiseScale, FaultParams { factor: Some(-1.0), ..Default::default() }, [0.0, 1.0]);
        assert!(neg.resolve("faults.0", TargetRef::Sensor(&lidar)).is_err());

        let silence_on_sensor = spec(FaultKind::Silence, FaultParams::default(), [0.0, 1.0]);
        assert_eq!(silence_on_sensor.resolve("faults.0", TargetRef::Sensor(&lidar)).unwrap_err().path, "faults.0.target");
        assert_eq!(silence_on_sensor.resolve("faults.0", TargetRef::Channel).unwrap(), Fault::Silence);
    }

    #[test]
    fn noise_scale_multiplies() {
        assert_eq!(noise_scale(&[]), 1.0);
        assert_eq!(noise_scale(&[Fault::NoiseScale(2.0), Fault::Dropout, Fault::NoiseScale(3.0)]), 6.0);
    }
}
