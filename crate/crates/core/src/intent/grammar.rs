use super::{Action, IntentCommand, IntentError, ParseResult, Source, PARAM_OFFSET, PARAM_RADIUS};
use crate::geometry::Vec2;
use crate::world::Region;

fn verb(token: &str) -> Option<Action> {
    Some(match token {
        "inspect" | "survey" | "check" => Action::Inspect,
        "go" | "goto" | "navigate" => Action::GoTo,
        "report" => Action::Report,
        "abort" | "stop" | "emergency" => Action::Abort,
        "hold" | "wait" | "pause" => Action::Hold,
        "formation" | "keep" => Action::SetFormation,
        _ => return None,
    })
}

fn region(token: &str) -> Option<Region> {
    Some(match token {
        "port" | "left" => Region::Port,
        "starboard" | "right" => Region::Starboard,
        "bow" | "front" => Region::Bow,
        "stern" | "aft" | "rear" => Region::Stern,
        "hull" | "whole" => Region::WholeHull,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Keyword {
    Radius,
    Offset,
    X,
    Y,
}

fn keyword(token: &str) -> Option<Keyword> {
    Some(match token {
        "radius" => Keyword::Radius,
        "offset" => Keyword::Offset,
        "x" => Keyword::X,
        "y" => Keyword::Y,
        _ => return None,
    })
}

const DEGREE_UNITS: &[&str] = &["deg", "degree", "degrees"];
const OTHER_UNITS: &[&str] = &["m", "meter", "meters", "metre", "metres", "rad", "radian", "radians"];

/// Filler that never counts as an unrecognized region.
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "to", "side", "sides", "near", "at", "on", "in", "around", "along",
    "and", "please", "now", "then", "section", "area", "part", "point", "by", "for", "with",
    "set", "change", "is", "be", "vehicle", "follower", "leader", "mission", "all", "entire",
    "anomalies", "anomaly", "status", "position", "there", "back", "up", "move",
];

fn number(token: &str) -> Option<f64> {
    let v: f64 = token.parse().ok()?;
    v.is_finite().then_some(v)
}

fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '.' || c == '-' || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .split_whitespace()
        .map(|t| t.trim_matches('.'))
        .filter(|t| !t.is_empty() && *t != "-")
        .map(str::to_string)
        .collect()
}

/// Deterministic keyword grammar.
///
/// The first verb token fixes the action. A specific region wins over the
/// whole hull. Each number binds to the nearest preceding keyword (`radius`,
/// `offset`, `x`, `y`) unless that keyword already holds a value; a `deg`
/// unit after an offset converts it to radians. Two unbound numbers form a
/// point.
pub fn parse_grammar(text: &str) -> ParseResult {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return ParseResult::err(IntentError::UnknownVerb, "empty command");
    }

    let Some((verb_at, action)) = tokens
        .iter()
        .enumerate()
        .find_map(|(i, t)| verb(t).map(|a| (i, a)))
    else {
        return ParseResult::err(IntentError::UnknownVerb, format!("no known verb in `{}`", tokens.join(" ")));
    };

    let mut specific: Option<Region> = None;
    let mut whole = false;
    let mut last_keyword: Option<Keyword> = None;
    let mut bound: [Option<f64>; 4] = [None; 4];
    let mut bare: Vec<f64> = Vec::new();
    let mut unknown: Vec<&str> = Vec::new();

    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        if i == verb_at || verb(t).is_some() {
            // Later verbs are treated as filler ("keep formation", "go to").
        } else if let Some(r) = region(t) {
            if r == Region::WholeHull {
                whole = true;
            } else if specific.is_none() {
                specific = Some(r);
            }
        } else if let Some(k) = keyword(t) {
            last_keyword = Some(k);
        } else if let Some(mut v) = number(t) {
            let degrees = tokens
                .get(i + 1)
                .is_some_and(|u| DEGREE_UNITS.contains(&u.as_str()));
            if degrees {
                v = v.to_radians();
                i += 1;
            }
            match last_keyword {
                Some(k) if bound[k as usize].is_none() => bound[k as usize] = Some(v),
                _ => bare.push(v),
            }
        } else if OTHER_UNITS.contains(&t) || DEGREE_UNITS.contains(&t) || STOPWORDS.contains(&t) {
        } else {
            unknown.push(t);
        }
        i += 1;
    }

    let region = specific.or(whole.then_some(Region::WholeHull));
    let point = match (bound[Keyword::X as usize], bound[Keyword::Y as usize]) {
        (Some(x), Some(y)) => Some(Vec2::new(x, y)),
        (None, None) if bare.len() >= 2 => Some(Vec2::new(bare[0], bare[1])),
        _ => None,
    };

    let mut cmd = IntentCommand::new(action);
    match action {
        Action::Inspect | Action::Report | Action::GoTo => {
            if region.is_none() && point.is_none() {
                return if let Some(word) = unknown.first() {
                    ParseResult::err(IntentError::UnknownRegion, format!("unknown region `{word}`"))
                } else {
                    ParseResult::err(
                        IntentError::MissingArgument,
                        format!("{action:?} needs a region or a point"),
                    )
                };
            }
            // A named region takes precedence over stray coordinates.
            if let Some(r) = region {
                cmd.region = Some(r);
            } else {
                cmd.point = point;
            }
        }
        Action::Abort | Action::Hold => {}
        Action::SetFormation => {
            if let Some(r) = bound[Keyword::Radius as usize] {
                cmd.params.insert(PARAM_RADIUS.into(), r);
            }
            if let Some(o) = bound[Keyword::Offset as usize] {
                cmd.params.insert(PARAM_OFFSET.into(), o);
            }
            if cmd.params.is_empty() {
                return ParseResult::err(
                    IntentError::MissingArgument,
                    "formation change needs `radius <m>` and/or `offset <angle>`",
                );
            }
        }
    }

    match cmd.validate() {
        Ok(()) => ParseResult::Command {
            command: cmd,
            source: Source::Grammar,
            note: None,
        },
        Err(detail) => ParseResult::err(IntentError::MissingArgument, detail),
    }
}
