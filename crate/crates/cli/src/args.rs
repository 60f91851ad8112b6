//! Parsers for the `--pivot` and `--xi` option values.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};

use daerelax::format::parse_coordinate;
use daerelax::relax::PivotOverride;
use daerelax::VarKey;

/// Splits on commas that are not inside braces.
fn split_top(s: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    bail!("unbalanced braces in `{}`", s);
                }
            }
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        bail!("unbalanced braces in `{}`", s);
    }
    out.push(&s[start..]);
    Ok(out)
}

/// `{3,4,6}`, `3 4 6` or `3;4;6`.
fn int_list(s: &str) -> Result<Vec<i64>> {
    let s = s.trim();
    let body = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')).unwrap_or(s);
    body.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<i64>().with_context(|| format!("`{}` is not an integer", t)))
        .collect()
}

fn zero_based(v: Vec<i64>, what: &str) -> Result<Vec<usize>> {
    v.into_iter()
        .map(|k| if k >= 1 { Ok(k as usize - 1) } else { bail!("{} indices are one-based, got {}", what, k) })
        .collect()
}

/// Parses `r=..,I=..,J=..[,p=..][,q=..]` with one-based indices.
pub fn parse_pivot(s: &str) -> Result<PivotOverride> {
    let mut ov = PivotOverride::default();
    let (mut seen_i, mut seen_j) = (false, false);
    for part in split_top(s)? {
        let (k, v) = part.split_once('=').with_context(|| format!("expected key=value, got `{}`", part))?;
        match k.trim() {
            "r" => {
                let r: usize = v.trim().parse().with_context(|| format!("`{}` is not a row index", v))?;
                ov.r = Some(r.checked_sub(1).context("r is one-based")?);
            }
            "I" => {
                ov.rows = zero_based(int_list(v)?, "I")?;
                seen_i = true;
            }
            "J" => {
                ov.cols = zero_based(int_list(v)?, "J")?;
                seen_j = true;
            }
            "p" => ov.p = Some(int_list(v)?),
            "q" => ov.q = Some(int_list(v)?),
            other => bail!("unknown pivot key `{}`", other),
        }
    }
    if ov.r.is_some() != (seen_i && seen_j) {
        bail!("--pivot needs r, I and J together");
    }
    Ok(ov)
}

/// Parses `x3'=0.5,der(x4,1)=1`.
pub fn parse_xi(s: &str) -> Result<BTreeMap<VarKey, f64>> {
    let mut out = BTreeMap::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let eq = rest.find('=').with_context(|| format!("expected coordinate=value in `{}`", rest))?;
        let key = parse_coordinate(&rest[..eq])?;
        let tail = &rest[eq + 1..];
        let end = tail.find(',').unwrap_or(tail.len());
        let v: f64 = tail[..end].trim().parse().with_context(|| format!("`{}` is not a number", &tail[..end]))?;
        out.insert(key, v);
        rest = tail.get(end + 1..).unwrap_or("").trim();
    }
    Ok(out)
}
