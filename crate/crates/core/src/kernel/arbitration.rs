use crate::command::ChannelCommand;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("tick {tick}: two fresh commands from `{channel_id}` with priority {priority}")]
pub struct ArbitrationConflict {
    pub tick: u64,
    pub channel_id: String,
    pub priority: i32,
}

/// Picks the command applied at `tick`. Commands older than `staleness` ticks
/// are ignored; the highest priority wins and ties go to the lowest channel
/// id. `None` means coast.
pub fn arbitrate<'a>(
    commands: impl IntoIterator<Item = &'a ChannelCommand>,
    tick: u64,
    staleness: u64,
) -> Result<Option<&'a ChannelCommand>, ArbitrationConflict> {
    let mut best: Option<&ChannelCommand> = None;
    for c in commands {
        if c.tick > tick || tick - c.tick > staleness {
            continue;
        }
        best = match best {
            None => Some(c),
            Some(b) if b.priority == c.priority && b.channel_id == c.channel_id => {
                return Err(ArbitrationConflict {
                    tick,
                    channel_id: c.channel_id.clone(),
                    priority: c.priority,
                });
            }
            Some(b) if c.priority > b.priority || (c.priority == b.priority && c.channel_id < b.channel_id) => Some(c),
            keep => keep,
        };
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(id: &str, priority: i32, tick: u64) -> ChannelCommand {
        ChannelCommand {
            channel_id: id.into(),
            priority,
            accel: priority as f64,
            steer: 0.0,
            tick,
        }
    }

    #[test]
    fn safety_overrides_nominal() {
        let cs = [cmd("nominal", 1, 10), cmd("safety", 10, 10)];
        assert_eq!(arbitrate(&cs, 10, 5).unwrap().unwrap().channel_id, "safety");
    }

    #[test]
    fn singleton_and_empty() {
        let cs = [cmd("nominal", 1, 10)];
        assert_eq!(arbitrate(&cs, 10, 5).unwrap().unwrap().channel_id, "nominal");
        assert_eq!(arbitrate(&[], 10, 5).unwrap(), None);
    }

    #[test]
    fn stale_commands_are_dropped() {
        let cs = [cmd("nominal", 1, 20), cmd("safety", 10, 14)];
        assert_eq!(arbitrate(&cs, 20, 5).unwrap().unwrap().channel_id, "nominal");
        let cs = [cmd("nominal", 1, 20), cmd("safety", 10, 15)];
        assert_eq!(arbitrate(&cs, 20, 5).unwrap().unwrap().channel_id, "safety");
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let cs = [cmd("b", 3, 0), cmd("a", 3, 0), cmd("c", 3, 0)];
        assert_eq!(arbitrate(&cs, 0, 5).unwrap().unwrap().channel_id, "a");
    }

    #[test]
    fn identical_priority_and_id_aborts() {
        let cs = [cmd("x", 3, 0), cmd("x", 3, 1)];
        assert_eq!(
            arbitrate(&cs, 1, 5).unwrap_err(),
            ArbitrationConflict {
                tick: 1,
                channel_id: "x".into(),
                priority: 3
            }
        );
    }
}
