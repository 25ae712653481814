use super::{BranchRecord, BusRecord, BusType, GenRecord, NetworkModel};
use crate::{Error, Result};

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

struct Row {
    line: usize,
    values: Vec<f64>,
}

/// Parses MATPOWER `.m` case text into a validated, per-unit network model.
pub fn parse_case(text: &str) -> Result<NetworkModel> {
    let mut name = String::from("case");
    let mut base_mva = None;
    let mut bus_rows = None;
    let mut gen_rows = None;
    let mut branch_rows = None;

    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, strip_comment(l)));
    while let Some((line_no, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some((_, n)) = rest.split_once('=') {
                name = n.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else {
            continue;
        };
        let field = lhs.trim().trim_start_matches("mpc.");
        let rhs = rhs.trim();
        match field {
            "baseMVA" => {
                let v = rhs.trim_end_matches(';').trim();
                base_mva = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid baseMVA '{v}'"),
                })?);
            }
            "bus" | "gen" | "branch" => {
                let Some(body) = rhs.strip_prefix('[') else {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected '[' after mpc.{field}"),
                    });
                };
                let rows = read_matrix(line_no, body, &mut lines)?;
                match field {
                    "bus" => bus_rows = Some(rows),
                    "gen" => gen_rows = Some(rows),
                    _ => branch_rows = Some(rows),
                }
            }
            _ => {}
        }
    }

    let missing = |what: &str| Error::Parse {
        line: text.lines().count(),
        msg: format!("missing {what}"),
    };
    let base_mva = base_mva.ok_or_else(|| missing("mpc.baseMVA"))?;
    let bus_rows = bus_rows.ok_or_else(|| missing("mpc.bus matrix"))?;
    let gen_rows = gen_rows.ok_or_else(|| missing("mpc.gen matrix"))?;
    let branch_rows = branch_rows.ok_or_else(|| missing("mpc.branch matrix"))?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        check_width(row, BUS_COLS, "bus")?;
        let v = &row.values;
        let kind = match v[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            4 => {
                return Err(Error::Validation(format!(
                    "isolated bus {} (type 4) is not supported",
                    v[0]
                )))
            }
            t => {
                return Err(Error::Parse {
                    line: row.line,
                    msg: format!("unknown bus type {t}"),
                })
            }
        };
        buses.push(BusRecord {
            id: as_id(row, 0)?,
            kind,
            pd: v[2] / base_mva,
            qd: v[3] / base_mva,
            gs: v[4] / base_mva,
            bs: v[5] / base_mva,
            vm: v[7],
            va: v[8].to_radians(),
            base_kv: v[9],
        });
    }
    let index: std::collections::HashMap<usize, usize> = buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    let lookup = |row: &Row, col: usize| -> Result<usize> {
        let id = as_id(row, col)?;
        index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Validation(format!("line {}: unknown bus {id}", row.line)))
    };

    let mut gens = Vec::with_capacity(gen_rows.len());
    for row in &gen_rows {
        check_width(row, GEN_COLS, "gen")?;
        let v = &row.values;
        gens.push(GenRecord {
            bus: lookup(row, 0)?,
            pg: v[1] / base_mva,
            qg: v[2] / base_mva,
            qmax: v[3] / base_mva,
            qmin: v[4] / base_mva,
            vg: v[5],
            in_service: v[7] > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        check_width(row, BRANCH_COLS, "branch")?;
        let v = &row.values;
        branches.push(BranchRecord {
            from: lookup(row, 0)?,
            to: lookup(row, 1)?,
            r: v[2],
            x: v[3],
            b: v[4],
            ratio: v[8],
            shift: v[9].to_radians(),
            in_service: v[10] > 0.0,
        });
    }

    NetworkModel::new(name, base_mva, buses, branches, gens)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn read_matrix<'a>(
    start_line: usize,
    first: &'a str,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let mut pending: Option<(usize, &'a str)> = Some((start_line, first));
    loop {
        let (line_no, content) = match pending.take() {
            Some(p) => p,
            None => lines.next().ok_or(Error::Parse {
                line: start_line,
                msg: "unterminated matrix".into(),
            })?,
        };
        let (body, done) = match content.find(']') {
            Some(k) => (&content[..k], true),
            None => (content, false),
        };
        for chunk in body.split(';') {
            let values = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("malformed matrix entry '{t}'"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if !values.is_empty() {
                rows.push(Row { line: line_no, values });
            }
        }
        if done {
            return Ok(rows);
        }
    }
}

fn check_width(row: &Row, min: usize, what: &str) -> Result<()> {
    if row.values.len() < min {
        return Err(Error::Parse {
            line: row.line,
            msg: format!("{what} row has {} columns, expected at least {min}", row.values.len()),
        });
    }
    Ok(())
}

fn as_id(row: &Row, col: usize) -> Result<usize> {
    let v = row.values[col];
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Parse {
            line: row.line,
            msg: format!("invalid bus number {v}"),
        });
    }
    Ok(v as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::test_cases::{CASE118, CASE4GS, TWO_BUS};

    #[test]
    fn parses_ieee118() {
        let m = parse_case(CASE118).unwrap();
        assert_eq!(m.n_bus(), 118);
        assert_eq!(m.branches.len(), 186);
        assert_eq!(m.gens.len(), 54);
        assert_eq!(m.base_mva, 100.0);
        assert_eq!(m.bus_id(m.slack()), 69);
        // bus 1: Pd = 51 MW on a 100 MVA base
        assert!((m.buses[0].pd - 0.51).abs() < 1e-15);
    }

    #[test]
    fn parses_two_bus() {
        let m = parse_case(TWO_BUS).unwrap();
        assert_eq!(m.n_bus(), 2);
        assert_eq!(m.branches.len(), 1);
        assert_eq!(m.name, "two_bus");
    }

    #[test]
    fn four_bus_toy() {
        let m = parse_case(CASE4GS).unwrap();
        assert_eq!(m.n_bus(), 4);
        assert_eq!(m.bus_id(m.slack()), 1);
    }

    #[test]
    fn disconnected_bus_is_rejected() {
        let text = TWO_BUS.replace(
            "    2   1   0   0   0   0   1   1   0   230 1   1.1 0.9;\n",
            "    2   1   0   0   0   0   1   1   0   230 1   1.1 0.9;\n    3   1   0   0   0   0   1   1   0   230 1   1.1 0.9;\n",
        );
        let err = parse_case(&text).unwrap_err();
        assert!(err.to_string().contains("disconnected bus 3"), "{err}");
    }

    #[test]
    fn out_of_service_branch_is_kept_but_does_not_connect() {
        let text = TWO_BUS.replace("1   -360    360;", "0   -360    360;");
        let err = parse_case(&text).unwrap_err();
        assert!(err.to_string().contains("disconnected bus 2"), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let text = TWO_BUS.replace("0.1 0   0", "0.1 abc 0");
        match parse_case(&text).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 12);
                assert!(msg.contains("abc"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_slack_is_a_validation_error() {
        let text = TWO_BUS.replace("1   3   0", "1   2   0");
        let err = parse_case(&text).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("missing slack")),
            "{err}"
        );
    }

    #[test]
    fn missing_matrix_is_reported() {
        let text = TWO_BUS.split("mpc.branch").next().unwrap();
        assert!(matches!(parse_case(text), Err(Error::Parse { .. })));
    }
}
