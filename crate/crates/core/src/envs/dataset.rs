use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{State, StateSpace, Trajectory};

/// One `(s, a, s', a')` tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: usize,
    pub next_state: State,
    pub next_action: usize,
}

/// The offline learning signal: consecutive state-action pairs from demonstrations.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub transitions: Vec<Transition>,
    pub space: StateSpace,
    pub n_actions: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trajectory {index}: {message}")]
    Invalid { index: usize, message: String },
}

/// Emits one tuple per consecutive pair of each trajectory, `n = sum(len - 1)`.
///
/// Trajectories shorter than two steps contribute nothing.
pub fn build_dataset(
    trajectories: &[Trajectory],
    space: StateSpace,
    n_actions: usize,
) -> Result<Dataset, DemoError> {
    let mut transitions = Vec::new();
    for (index, traj) in trajectories.iter().enumerate() {
        check_trajectory(index, traj, space, n_actions)?;
        for t in 1..traj.len() {
            transitions.push(Transition {
                state: traj.states[t - 1].clone(),
                action: traj.actions[t - 1],
                next_state: traj.states[t].clone(),
                next_action: traj.actions[t],
            });
        }
    }
    Ok(Dataset {
        transitions,
        space,
        n_actions,
    })
}

fn check_trajectory(index: usize, traj: &Trajectory, space: StateSpace, n_actions: usize) -> Result<(), DemoError> {
    let invalid = |message: String| DemoError::Invalid { index, message };
    if traj.states.len() != traj.actions.len() {
        return Err(invalid(format!(
            "{} states but {} actions",
            traj.states.len(),
            traj.actions.len()
        )));
    }
    if let Some(s) = traj.states.iter().find(|s| !space.contains(s)) {
        return Err(invalid(format!("state {s:?} is not in {space:?}")));
    }
    if let Some(a) = traj.actions.iter().find(|a| **a >= n_actions) {
        return Err(invalid(format!("action {a} out of range for {n_actions} actions")));
    }
    if traj
        .states
        .iter()
        .filter_map(State::features)
        .flatten()
        .any(|x| !x.is_finite())
    {
        return Err(invalid("non-finite state feature".into()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoLine {
    states: Vec<State>,
    actions: Vec<usize>,
}

/// Writes one JSON object per trajectory: `{"states": [...], "actions": [...]}`.
pub fn write_demos<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<(), DemoError> {
    for traj in trajectories {
        let line = DemoLine {
            states: traj.states.clone(),
            actions: traj.actions.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON Lines demonstration file; blank lines are skipped.
///
/// Every state in the file must be of the same kind (tabular ids or
/// equal-length real arrays). The `terminated` flag is not persisted and
/// reads back as `false`.
pub fn read_demos<R: BufRead>(input: R) -> Result<Vec<Trajectory>, DemoError> {
    let mut trajectories = Vec::new();
    let mut kind: Option<StateKind> = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let parsed: DemoLine = serde_json::from_str(&line).map_err(|e| DemoError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if parsed.states.len() != parsed.actions.len() {
            return Err(DemoError::Parse {
                line: lineno,
                message: format!("{} states but {} actions", parsed.states.len(), parsed.actions.len()),
            });
        }
        for state in &parsed.states {
            let this = StateKind::of(state);
            match kind {
                None => kind = Some(this),
                Some(k) if k != this => {
                    return Err(DemoError::Parse {
                        line: lineno,
                        message: format!("state kind {this:?} differs from earlier {k:?}"),
                    })
                }
                Some(_) => {}
            }
        }
        trajectories.push(Trajectory {
            states: parsed.states,
            actions: parsed.actions,
            terminated: false,
        });
    }
    Ok(trajectories)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum StateKind {
    Discrete,
    Continuous(usize),
}

impl StateKind {
    fn of(state: &State) -> Self {
        match state {
            State::Discrete(_) => StateKind::Discrete,
            State::Continuous(x) => StateKind::Continuous(x.len()),
        }
    }
}

/// Visit counts per tabular state and the same counts scaled to a maximum of 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Occupancy {
    pub counts: Vec<u64>,
    pub relative: Vec<f64>,
}

impl Occupancy {
    pub fn total_visits(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn occupancy_counts(trajectories: &[Trajectory], n_states: usize) -> Occupancy {
    let mut counts = vec![0u64; n_states];
    for s in trajectories.iter().flat_map(|t| &t.states).filter_map(State::index) {
        if s < n_states {
            counts[s] += 1;
        }
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    let relative = counts
        .iter()
        .map(|c| if max == 0 { 0.0 } else { *c as f64 / max as f64 })
        .collect();
    Occupancy { counts, relative }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(states: &[usize], actions: &[usize]) -> Trajectory {
        Trajectory {
            states: states.iter().map(|s| State::Discrete(*s)).collect(),
            actions: actions.to_vec(),
            terminated: false,
        }
    }

    const SPACE: StateSpace = StateSpace::Discrete { n_states: 10 };

    #[test]
    fn tuple_counts() {
        let d = build_dataset(&[traj(&[0, 1, 2, 3, 4], &[0, 1, 0, 1, 0])], SPACE, 2).unwrap();
        assert_eq!(d.len(), 4);
        let d = build_dataset(&[traj(&[5, 6], &[1, 0])], SPACE, 2).unwrap();
        assert_eq!(d.len(), 1);
        let d = build_dataset(&[traj(&[5], &[1])], SPACE, 2).unwrap();
        assert!(d.is_empty());
        assert!(build_dataset(&[], SPACE, 2).unwrap().is_empty());
    }

    #[test]
    fn successors_are_shifted_states() {
        let t = traj(&[3, 1, 4, 1, 5], &[0, 1, 1, 0, 1]);
        let d = build_dataset(std::slice::from_ref(&t), SPACE, 2).unwrap();
        for (i, tr) in d.transitions.iter().enumerate() {
            assert_eq!(tr.state, t.states[i]);
            assert_eq!(tr.next_state, t.states[i + 1]);
            assert_eq!(tr.action, t.actions[i]);
            assert_eq!(tr.next_action, t.actions[i + 1]);
        }
    }

    #[test]
    fn rejects_out_of_space() {
        assert!(build_dataset(&[traj(&[0, 11], &[0, 0])], SPACE, 2).is_err());
        assert!(build_dataset(&[traj(&[0, 1], &[0, 2])], SPACE, 2).is_err());
    }

    #[test]
    fn demos_round_trip_and_shape() {
        let trajs = vec![traj(&[0, 1, 2], &[1, 0, 1]), traj(&[4], &[3])];
        let mut buf = Vec::new();
        write_demos(&mut buf, &trajs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"states":[0,1,2],"actions":[1,0,1]}"#);
        assert_eq!(read_demos(&buf[..]).unwrap(), trajs);

        let cont = vec![Trajectory {
            states: vec![State::Continuous(vec![0.1, -2.5e-3]), State::Continuous(vec![1e-300, 7.0])],
            actions: vec![0, 1],
            terminated: false,
        }];
        let mut buf = Vec::new();
        write_demos(&mut buf, &cont).unwrap();
        assert_eq!(read_demos(&buf[..]).unwrap(), cont);
    }

    #[test]
    fn demo_parse_errors() {
        let mixed = "{\"states\":[0,[1.0]],\"actions\":[0,0]}\n";
        assert!(matches!(read_demos(mixed.as_bytes()), Err(DemoError::Parse { line: 1, .. })));
        let short = "\n{\"states\":[0,1],\"actions\":[0]}\n";
        assert!(matches!(read_demos(short.as_bytes()), Err(DemoError::Parse { line: 2, .. })));
        let extra = "{\"states\":[0],\"actions\":[0],\"x\":1}";
        assert!(read_demos(extra.as_bytes()).is_err());
        let negative = "{\"states\":[-1],\"actions\":[0]}";
        assert!(read_demos(negative.as_bytes()).is_err());
    }

    #[test]
    fn occupancy_single_state() {
        let occ = occupancy_counts(&[traj(&[2, 2, 2], &[0, 0, 0])], 4);
        assert_eq!(occ.relative, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(occ.counts, vec![0, 0, 3, 0]);
    }

    #[test]
    fn occupancy_recount() {
        let trajs = [traj(&[0, 1, 1, 3], &[0; 4]), traj(&[1, 3, 3], &[0; 3])];
        let occ = occupancy_counts(&trajs, 4);
        let max = *occ.counts.iter().max().unwrap() as f64;
        let recovered: f64 = occ.relative.iter().sum::<f64>() * max;
        assert!((recovered - 7.0).abs() < 1e-12);
        assert_eq!(occ.total_visits(), 7);
    }
}
