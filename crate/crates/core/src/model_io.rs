//! Line-oriented text format for explicit models.
//!
//! ```text
//! mdp <name> states=<n> initial=<id> pmin=<float>
//! state <id> reward=<float> [goal]
//! trans <state> <action-label> <succ> <prob>
//! ```
//!
//! `#` starts a comment. States without a `state` line have reward 0 and are
//! not goals. Action labels are interned per state in order of first use.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{ExplicitMdp, GrayBoxView, MdpBuilder, StateId};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn key_value<'a>(line: usize, token: Option<&'a str>, key: &str) -> Result<&'a str> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing `{key}=`")))?;
    token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| parse_err(line, format!("expected `{key}=<value>`, found `{token}`")))
}

fn number<T: std::str::FromStr>(line: usize, text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{text}`")))
}

fn state_id(line: usize, text: &str, n: usize) -> Result<StateId> {
    let s: StateId = number(line, text, "state id")?;
    if s >= n {
        return Err(parse_err(line, format!("state {s} out of range (states={n})")));
    }
    Ok(s)
}

pub fn parse_model(text: &str) -> Result<ExplicitMdp> {
    let mut builder: Option<MdpBuilder> = None;
    let mut declared_states = Vec::new();
    let mut labels: Vec<HashMap<String, usize>> = Vec::new();
    let mut seen_triples = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        let Some(b) = builder.as_mut() else {
            if keyword != "mdp" {
                return Err(parse_err(line, "expected `mdp` header before any record"));
            }
            let name = tokens
                .next()
                .ok_or_else(|| parse_err(line, "missing model name"))?;
            let n: usize = number(line, key_value(line, tokens.next(), "states")?, "state count")?;
            if n == 0 {
                return Err(parse_err(line, "model needs at least one state"));
            }
            let initial = state_id(line, key_value(line, tokens.next(), "initial")?, n)?;
            let p_min: f64 = number(line, key_value(line, tokens.next(), "pmin")?, "pmin")?;
            if !(p_min > 0.0 && p_min <= 1.0) {
                return Err(parse_err(line, format!("pmin {p_min} is outside (0, 1]")));
            }
            if let Some(extra) = tokens.next() {
                return Err(parse_err(line, format!("unexpected token `{extra}`")));
            }
            builder = Some(MdpBuilder::new(name, n, initial, p_min));
            declared_states = vec![false; n];
            labels = vec![HashMap::new(); n];
            continue;
        };
        let n = b.num_states();
        match keyword {
            "mdp" => return Err(parse_err(line, "duplicate `mdp` header")),
            "state" => {
                let s = state_id(line, tokens.next().unwrap_or(""), n)?;
                if std::mem::replace(&mut declared_states[s], true) {
                    return Err(parse_err(line, format!("state {s} declared twice")));
                }
                let reward: f64 = number(line, key_value(line, tokens.next(), "reward")?, "reward")?;
                if !reward.is_finite() {
                    return Err(parse_err(line, "reward must be finite"));
                }
                b.reward(s, reward);
                match tokens.next() {
                    None => {}
                    Some("goal") => {
                        b.goal(s);
                    }
                    Some(other) => {
                        return Err(parse_err(line, format!("unexpected token `{other}`")))
                    }
                }
                if let Some(extra) = tokens.next() {
                    return Err(parse_err(line, format!("unexpected token `{extra}`")));
                }
            }
            "trans" => {
                let s = state_id(line, tokens.next().unwrap_or(""), n)?;
                let label = tokens
                    .next()
                    .ok_or_else(|| parse_err(line, "missing action label"))?;
                let succ = state_id(line, tokens.next().unwrap_or(""), n)?;
                let prob: f64 =
                    number(line, tokens.next().ok_or_else(|| parse_err(line, "missing probability"))?, "probability")?;
                if let Some(extra) = tokens.next() {
                    return Err(parse_err(line, format!("unexpected token `{extra}`")));
                }
                if seen_triples
                    .insert((s, label.to_string(), succ), line)
                    .is_some()
                {
                    return Err(parse_err(
                        line,
                        format!("duplicate transition ({s}, {label}, {succ})"),
                    ));
                }
                let a = match labels[s].get(label) {
                    Some(&a) => a,
                    None => {
                        let a = b.action(s, label, Vec::new());
                        labels[s].insert(label.to_string(), a);
                        a
                    }
                };
                b.add_mass(s, a, succ, prob);
            }
            other => return Err(parse_err(line, format!("unknown record `{other}`"))),
        }
    }
    builder
        .ok_or_else(|| parse_err(1, "missing `mdp` header"))?
        .build()
}

/// Writes `mdp` in the text format. Floats use shortest round-trip notation.
pub fn serialize_model(mdp: &ExplicitMdp) -> String {
    let v = mdp.view();
    let mut out = String::new();
    let name = if v.name().is_empty() { "model" } else { v.name() };
    let _ = writeln!(
        out,
        "mdp {name} states={} initial={} pmin={}",
        v.num_states(),
        v.initial(),
        v.p_min()
    );
    for s in 0..v.num_states() {
        let goal = if v.is_goal(s) { " goal" } else { "" };
        let _ = writeln!(out, "state {s} reward={}{goal}", v.reward(s));
    }
    for s in 0..v.num_states() {
        for p in v.pairs(s) {
            for t in v.triples(p) {
                let _ = writeln!(
                    out,
                    "trans {s} {} {} {}",
                    v.label(p),
                    v.successor(t),
                    mdp.prob(t)
                );
            }
        }
    }
    out
}

pub fn read_model_file(path: &std::path::Path) -> Result<ExplicitMdp> {
    parse_model(&std::fs::read_to_string(path)?)
}

/// The topology, rewards and `p_min` of `mdp` without its probabilities.
pub fn gray_box_of(mdp: &ExplicitMdp) -> Arc<GrayBoxView> {
    mdp.view().clone()
}

/// Number of triples `(s, a, s')` whose pair has more than one successor.
pub fn count_probabilistic_transitions(view: &GrayBoxView) -> usize {
    (0..view.num_pairs())
        .filter(|&p| view.is_probabilistic(p))
        .map(|p| view.triples(p).len())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = "\
# two states
mdp chain states=2 initial=0 pmin=1
state 0 reward=1
state 1 reward=0 goal
trans 0 go 1 1
";

    #[test]
    fn minimal_model() {
        let m = parse_model(CHAIN).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.view().successors(0), &[1]);
        assert_eq!(count_probabilistic_transitions(m.view()), 0);
    }

    #[test]
    fn sum_within_tolerance_is_accepted() {
        let text = "mdp m states=3 initial=0 pmin=0.1\nstate 1 reward=1 goal\nstate 2 reward=0 goal\n\
                    trans 0 a 1 0.5\ntrans 0 a 2 0.499999999\n";
        assert!(parse_model(text).is_ok());
        let text = text.replace("0.499999999", "0.49999");
        assert!(matches!(parse_model(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn pmin_breach_is_named() {
        let text = "mdp m states=3 initial=0 pmin=0.01\nstate 1 reward=1 goal\nstate 2 reward=0 goal\n\
                    trans 0 a 1 0.001\ntrans 0 a 2 0.999\n";
        let err = parse_model(text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("p_min violated"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "mdp m states=2 initial=0 pmin=1\n\nstate 1 reward=0 goal\ntrans 0 a 5 1\n";
        match parse_model(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let text = "mdp m states=2 initial=0 pmin=1\nstate 1 reward=0 goal\ntrans 0 a 1 0.5\ntrans 0 a 1 0.5\n";
        match parse_model(text) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_model("state 0 reward=1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_model(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn goal_with_actions_rejected() {
        let text = "mdp m states=2 initial=0 pmin=1\nstate 1 reward=0 goal\ntrans 0 a 1 1\ntrans 1 a 1 1\n";
        let err = parse_model(text).unwrap_err().to_string();
        assert!(err.contains("goal state 1"), "{err}");
    }

    #[test]
    fn labels_interned_in_order_of_first_use() {
        let text = "mdp m states=3 initial=0 pmin=0.5\nstate 2 reward=1 goal\n\
                    trans 0 right 1 1\ntrans 0 left 2 0.5\ntrans 0 left 1 0.5\ntrans 1 up 2 1\n";
        let m = parse_model(text).unwrap();
        let v = m.view();
        assert_eq!(v.label(v.pair(0, 0).unwrap()), "right");
        assert_eq!(v.label(v.pair(0, 1).unwrap()), "left");
        assert_eq!(v.successors(v.pair(0, 1).unwrap()), &[1, 2]);
        assert_eq!(count_probabilistic_transitions(v), 2);
    }

    #[test]
    fn serialize_round_trip() {
        let text = "mdp m states=3 initial=0 pmin=0.1\nstate 0 reward=-0.5\nstate 1 reward=1 goal\nstate 2 reward=0 goal\n\
                    trans 0 a 1 0.3\ntrans 0 a 2 0.7\ntrans 0 b 0 0.1\ntrans 0 b 1 0.9\n";
        let m = parse_model(text).unwrap();
        let again = parse_model(&serialize_model(&m)).unwrap();
        assert_eq!(m, again);
    }
}
