//! The co-simulation master: clock, bus, phase schedule, arbitration, trace.
//!
//! Each tick runs these phases in order:
//!
//! 1. scripted actors advance (skipped at tick 0);
//! 2. the ground-truth scene is published;
//! 3. fault windows are updated, delayed frames released, and every sensor
//!    whose rate divisor divides the tick samples and has its faults applied;
//! 4. channels step in registration order on their inbox: subscribed
//!    messages up to phase 3 of this tick plus anything from earlier ticks.
//!    Channel outputs of this tick therefore reach peers on the next tick;
//! 5. the freshest commands are arbitrated;
//! 6. the ego steps with the winning command (or coasts);
//! 7. collision and goal checks on this tick's scene, then the state record.

mod arbitration;
mod bus;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use arbitration::{arbitrate, ArbitrationConflict};
pub use bus::{Bus, BusError, BusMessage, Payload, PayloadKind, Phase};
pub use trace::{
    digest, parse_records, AppliedCommand, EndReason, EndRecord, MsgRecord, ParsedTrace, StateRecord, TopicDecl,
    TraceError, TraceHeader, TraceLog, TraceRecord, TRACE_FORMAT_VERSION,
};

use crate::command::{Actuation, ChannelCommand, CommandLimits, Heartbeat};
use crate::error::ValidationError;
use crate::faults::{active_faults, apply_channel_fault, apply_sensor_fault, noise_scale, silences, Disposition, Fault, SensorHistory};
use crate::rng::NoiseStream;
use crate::safety::Verdict;
use crate::scenario::RunManifest;
use crate::sensors::{sample, sensor_topic, SensorContext, SensorFrame};
use crate::world::{advance_scripted, ground_truth, step_actor, ActorKind, Control, Scene, StepError};

pub const GROUND_TRUTH_TOPIC: &str = "ground_truth";
pub const FAULTS_TOPIC: &str = "faults";
const KERNEL: &str = "kernel";

pub fn command_topic(channel: &str) -> String {
    format!("command/{channel}")
}

pub fn heartbeat_topic(channel: &str) -> String {
    format!("heartbeat/{channel}")
}

pub fn verdict_topic(channel: &str) -> String {
    format!("verdict/{channel}")
}

pub fn metric_topic(channel: &str) -> String {
    format!("metric/{channel}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultEventKind {
    Activated,
    Deactivated,
    ChannelError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub target: String,
    pub event: FaultEventKind,
    /// Index into the scenario's fault list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Free-form diagnostic data published by a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEvent {
    pub name: String,
    pub data: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelEvent {
    Verdict(Verdict),
    Metric(MetricEvent),
}

pub struct ChannelInput<'a> {
    pub tick: u64,
    pub time: f64,
    pub dt: f64,
    /// Messages from subscribed topics, in bus order.
    pub inbox: &'a [BusMessage],
}

impl<'a> ChannelInput<'a> {
    pub fn sensor_frames(&self) -> impl Iterator<Item = &'a SensorFrame> {
        self.inbox.iter().filter_map(|m| match &*m.payload {
            Payload::SensorFrame(f) => Some(f),
            _ => None,
        })
    }

    pub fn scene(&self) -> Option<&'a Scene> {
        self.inbox.iter().rev().find_map(|m| match &*m.payload {
            Payload::Scene(s) => Some(s),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelOutput {
    pub command: Option<Actuation>,
    /// Heartbeat counter to publish, if the channel is alive this step.
    pub heartbeat: Option<u64>,
    pub events: Vec<ChannelEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ChannelError(pub String);

/// A control channel. Steps are deterministic callbacks run once per tick.
pub trait Channel {
    fn id(&self) -> &str;
    fn priority(&self) -> i32;
    /// Topics beyond sensor and ground-truth routing, e.g. a peer's heartbeat.
    fn subscriptions(&self) -> Vec<String> {
        Vec::new()
    }
    fn step(&mut self, input: &ChannelInput<'_>) -> Result<ChannelOutput, ChannelError>;
}

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("invalid manifest: {0}")]
    Invalid(#[from] ValidationError),
    #[error("channel set: {0}")]
    Channels(String),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("arbitration invariant violated: {0}")]
    Arbitration(#[from] ArbitrationConflict),
    #[error("ego step at tick {tick}: {source}")]
    Step { tick: u64, source: StepError },
}

/// Executes one run and returns its trace.
pub fn run(
    manifest: &RunManifest,
    mut channels: Vec<Box<dyn Channel + '_>>,
    channel_config: serde_json::Value,
) -> Result<TraceLog, KernelError> {
    let spec = &manifest.spec;
    spec.validate()?;
    if channels.is_empty() {
        return Err(KernelError::Channels("at least one channel must be registered".into()));
    }
    let registered: BTreeSet<&str> = channels.iter().map(|c| c.id()).collect();
    if registered.len() != channels.len() {
        return Err(KernelError::Channels("channel ids must be unique".into()));
    }
    let declared: BTreeSet<&str> = spec.channels.iter().map(String::as_str).collect();
    if registered != declared {
        return Err(KernelError::Channels(format!(
            "registered channels {registered:?} differ from the scenario's {declared:?}"
        )));
    }

    let faults = spec.resolve_faults()?;
    let mut world = spec.build_world()?;
    let ego_idx = world.ego_index();
    let limits = CommandLimits::from_vehicle(&spec.ego.params);
    let dt = spec.dt;

    let mut bus = Bus::new();
    bus.declare(GROUND_TRUTH_TOPIC, PayloadKind::Scene)?;
    bus.declare(FAULTS_TOPIC, PayloadKind::FaultEvent)?;
    for s in &spec.sensors {
        bus.declare(&sensor_topic(&s.id), PayloadKind::SensorFrame)?;
    }
    for c in &channels {
        bus.declare(&command_topic(c.id()), PayloadKind::ChannelCommand)?;
        bus.declare(&heartbeat_topic(c.id()), PayloadKind::Heartbeat)?;
        bus.declare(&verdict_topic(c.id()), PayloadKind::Verdict)?;
        bus.declare(&metric_topic(c.id()), PayloadKind::MetricEvent)?;
    }
    let routing = spec.routing_table();
    for c in &channels {
        let id = c.id().to_string();
        for s in &spec.sensors {
            if routing.channels_for(&s.id).any(|ch| *ch == id) {
                bus.subscribe(&id, &sensor_topic(&s.id))?;
            }
        }
        if spec.routing.ground_truth.contains(&id) {
            bus.subscribe(&id, GROUND_TRUTH_TOPIC)?;
        }
        for t in c.subscriptions() {
            bus.subscribe(&id, &t)?;
        }
    }

    let mut trace = TraceLog::new();
    trace.push(&TraceRecord::Header(TraceHeader {
        format_version: TRACE_FORMAT_VERSION,
        manifest: manifest.clone(),
        channels: channel_config,
        topics: bus
            .topics()
            .map(|(t, k)| TopicDecl {
                topic: t.clone(),
                payload: *k,
            })
            .collect(),
    }));

    let mut rngs: Vec<NoiseStream> = spec.sensors.iter().map(|s| NoiseStream::named(spec.seed, &s.id)).collect();
    let mut histories = vec![SensorHistory::default(); spec.sensors.len()];
    let mut delayed: Vec<(u64, usize, SensorFrame)> = Vec::new();
    let mut last_emitted: BTreeMap<String, ChannelCommand> = BTreeMap::new();
    let mut prev_active: Vec<usize> = Vec::new();
    let max_ticks = spec.max_ticks();
    let mut end = EndReason::MaxTime;
    let mut ticks = 0;

    for tick in 0..max_ticks {
        let time = tick as f64 * dt;
        let mut contained = Vec::new();

        // Phase 1.
        if tick > 0 {
            for i in 0..world.actors.len() {
                if world.actors[i].kind != ActorKind::Ego {
                    world.actors[i] = advance_scripted(&world.actors[i], dt, &world.environment);
                    if world.contain(i) {
                        contained.push(world.actors[i].id.clone());
                    }
                }
            }
        }

        // Phase 2.
        let scene = ground_truth(&world, tick, dt);
        bus.publish(tick, Phase::GroundTruth, KERNEL, GROUND_TRUTH_TOPIC, Payload::Scene(scene.clone()))?;

        // Phase 3.
        let active = active_faults(&spec.faults, time);
        for &i in &active {
            if !prev_active.contains(&i) {
                bus.publish(tick, Phase::Sensors, FAULTS_TOPIC, FAULTS_TOPIC, fault_event(&spec.faults[i].target, FaultEventKind::Activated, i))?;
            }
        }
        for &i in &prev_active {
            if !active.contains(&i) {
                bus.publish(tick, Phase::Sensors, FAULTS_TOPIC, FAULTS_TOPIC, fault_event(&spec.faults[i].target, FaultEventKind::Deactivated, i))?;
            }
        }
        let faults_for = |target: &str| -> Vec<Fault> {
            active
                .iter()
                .filter(|&&i| spec.faults[i].target == target)
                .map(|&i| faults[i])
                .collect()
        };

        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut delayed).into_iter().partition(|(d, _, _)| *d <= tick);
        delayed = later;
        for (_, si, frame) in due {
            histories[si].last_delivered = Some(frame.clone());
            bus.publish(tick, Phase::Sensors, &frame.sensor_id.clone(), &sensor_topic(&frame.sensor_id), Payload::SensorFrame(frame))?;
        }
        let sampling: Vec<usize> = (0..spec.sensors.len())
            .filter(|&i| tick % spec.sensors[i].rate_divisor == 0)
            .collect();
        if !sampling.is_empty() {
            let ctx = SensorContext::new(&scene);
            for si in sampling {
                let cfg = &spec.sensors[si];
                let sf = faults_for(&cfg.id);
                let frame = sample(cfg, &ctx, noise_scale(&sf), &mut rngs[si]);
                match apply_sensor_fault(frame, &sf, &histories[si]) {
                    Disposition::Deliver(f) => {
                        histories[si].last_delivered = Some(f.clone());
                        bus.publish(tick, Phase::Sensors, &cfg.id, &sensor_topic(&cfg.id), Payload::SensorFrame(f))?;
                    }
                    Disposition::Suppressed => {}
                    Disposition::Delayed { due, frame } => delayed.push((due, si, frame)),
                }
            }
        }

        // Phase 4.
        for ch in channels.iter_mut() {
            let id = ch.id().to_string();
            let inbox = bus.take(&id, tick, Phase::Sensors);
            let input = ChannelInput {
                tick,
                time,
                dt,
                inbox: &inbox,
            };
            let out = match ch.step(&input) {
                Ok(out) => match out.command {
                    Some(a) if !(a.accel.is_finite() && a.steer.is_finite()) => {
                        Err(ChannelError(format!("non-finite command {a:?}")))
                    }
                    _ => Ok(out),
                },
                Err(e) => Err(e),
            };
            let out = match out {
                Ok(out) => out,
                Err(e) => {
                    bus.publish(
                        tick,
                        Phase::Channels,
                        &id,
                        FAULTS_TOPIC,
                        Payload::FaultEvent(FaultEvent {
                            target: id.clone(),
                            event: FaultEventKind::ChannelError,
                            fault: None,
                            detail: Some(e.0),
                        }),
                    )?;
                    ChannelOutput::default()
                }
            };
            for ev in out.events {
                match ev {
                    ChannelEvent::Verdict(v) => bus.publish(tick, Phase::Channels, &id, &verdict_topic(&id), Payload::Verdict(v))?,
                    ChannelEvent::Metric(m) => bus.publish(tick, Phase::Channels, &id, &metric_topic(&id), Payload::MetricEvent(m))?,
                }
            }
            let cmd = out.command.map(|a| {
                let (accel, steer) = limits.clamp(a.accel, a.steer);
                ChannelCommand {
                    channel_id: id.clone(),
                    priority: ch.priority(),
                    accel,
                    steer,
                    tick,
                }
            });
            let cf = faults_for(&id);
            let cmd = apply_channel_fault(cmd, &cf, last_emitted.get(&id), &limits, tick);
            if let Some(c) = cmd {
                bus.publish(tick, Phase::Channels, &id, &command_topic(&id), Payload::ChannelCommand(c.clone()))?;
                last_emitted.insert(id.clone(), c);
            }
            if let Some(counter) = out.heartbeat {
                if !silences(&cf) {
                    bus.publish(
                        tick,
                        Phase::Channels,
                        &id,
                        &heartbeat_topic(&id),
                        Payload::Heartbeat(Heartbeat {
                            channel_id: id.clone(),
                            counter,
                        }),
                    )?;
                }
            }
        }

        // Phase 5.
        let applied = arbitrate(last_emitted.values(), tick, spec.staleness)?;
        let control = applied.map_or(Control { accel: 0.0, steer: 0.0 }, ChannelCommand::control);
        let applied = applied.map(|c| AppliedCommand {
            channel_id: c.channel_id.clone(),
            issued: c.tick,
        });

        // Phase 6.
        world.actors[ego_idx] = step_actor(&world.actors[ego_idx], control, dt, &world.environment)
            .map_err(|source| KernelError::Step { tick, source })?;
        if world.contain(ego_idx) {
            contained.push(world.actors[ego_idx].id.clone());
        }

        // Phase 7.
        let clearance = scene.ego_clearance().map(|(d, _)| d);
        let collision = clearance == Some(0.0);
        let goal_reached = spec.termination.goal.is_some_and(|g| {
            scene.ego().state.pose.position().dist(g.pose.position()) <= g.radius
        });
        for m in bus.drain_log() {
            trace.push(&TraceRecord::Msg(MsgRecord {
                tick: m.tick,
                phase: m.phase,
                publisher: m.publisher,
                topic: m.topic,
                payload: m.payload,
            }));
        }
        trace.push(&TraceRecord::State(StateRecord {
            tick,
            time,
            applied,
            control,
            ego: world.actors[ego_idx].state,
            contained,
            active_faults: active.clone(),
            clearance,
            collision,
            goal_reached,
        }));
        prev_active = active;
        ticks = tick + 1;
        if collision && spec.termination.stop_on_collision {
            end = EndReason::Collision;
            break;
        }
        if goal_reached {
            end = EndReason::Goal;
            break;
        }
    }
    trace.push(&TraceRecord::End(EndRecord { ticks, reason: end }));
    Ok(trace)
}

fn fault_event(target: &str, event: FaultEventKind, index: usize) -> Payload {
    Payload::FaultEvent(FaultEvent {
        target: target.to_string(),
        event,
        fault: Some(index),
        detail: None,
    })
}
