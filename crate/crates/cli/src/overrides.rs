use toml::{Table, Value};

use crate::CliError;

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` assignments to a TOML document. Numeric path
/// segments index into arrays; `a[1].b` is the same as `a.1.b`.
pub fn apply(doc: &mut Table, assignments: &[String]) -> Result<(), CliError> {
    for assignment in assignments {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
        let dotted = key.trim().replace(']', "").replace('[', ".");
        let path: Vec<&str> = dotted.split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("--set has an empty key segment in {key:?}")));
        }
        set_path(doc, &path, parse_value(raw.trim()), key.trim())?;
    }
    Ok(())
}

fn set_path(doc: &mut Table, path: &[&str], value: Value, key: &str) -> Result<(), CliError> {
    let mut node = doc.entry(path[0]).or_insert_with(|| Value::Table(Table::new()));
    for seg in &path[1..] {
        node = match node {
            Value::Table(t) => t.entry(*seg).or_insert_with(|| Value::Table(Table::new())),
            Value::Array(items) => {
                let i: usize = seg
                    .parse()
                    .map_err(|_| CliError::Config(format!("--set {key}: {seg:?} is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| CliError::Config(format!("--set {key}: index {i} past the {len} entries")))?
            }
            _ => return Err(CliError::Config(format!("--set {key}: {seg:?} is below a plain value"))),
        };
    }
    *node = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(s: &str) -> Table {
        s.parse().unwrap()
    }

    #[test]
    fn nested_keys_and_types() {
        let mut d = doc("[scenario]\nduration = 5.0\n[[scenario.segments]]\nstart = 0.0\n");
        apply(
            &mut d,
            &[
                "scenario.duration=2.5".into(),
                "scenario.gait=trot".into(),
                "scenario.segments.0.vx=0.3".into(),
                "scenario.segments[0].vy=0.1".into(),
                "config.controller.mpc.horizon=12".into(),
                "config.body.hip_offsets=[[1,2,3]]".into(),
            ],
        )
        .unwrap();
        assert_eq!(d["scenario"]["duration"].as_float(), Some(2.5));
        assert_eq!(d["scenario"]["gait"].as_str(), Some("trot"));
        assert_eq!(d["scenario"]["segments"][0]["vx"].as_float(), Some(0.3));
        assert_eq!(d["scenario"]["segments"][0]["vy"].as_float(), Some(0.1));
        assert_eq!(d["config"]["controller"]["mpc"]["horizon"].as_integer(), Some(12));
        assert!(d["config"]["body"]["hip_offsets"].is_array());
    }

    #[test]
    fn malformed_assignments_rejected() {
        let mut d = doc("[scenario]\nsegments = []\n");
        assert!(apply(&mut d, &["novalue".into()]).is_err());
        assert!(apply(&mut d, &["scenario..x=1".into()]).is_err());
        assert!(apply(&mut d, &["scenario.segments.3.vx=1".into()]).is_err());
        assert!(apply(&mut d, &["scenario.segments.x=1".into()]).is_err());
    }
}
