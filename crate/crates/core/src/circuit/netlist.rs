//! Line-oriented netlist reader.

use std::collections::HashMap;

use super::{
    Analysis, Circuit, Device, DeviceKind, MosPolarity, ParamExpr, PssCard, RandomParam, Unknown,
    UnknownKind, Waveform,
};
use crate::circuit::expr::parse_number;
use crate::error::{Error, Result};
use crate::polychaos::Distribution;

#[derive(Debug, Clone)]
struct Token {
    text: String,
    col: usize,
}

/// Split a line into fields at whitespace outside parentheses and braces.
fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>> {
    let mut out: Vec<Token> = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    let mut start = 0;
    for (col, ch) in line.chars().enumerate() {
        match ch {
            '(' | '{' => depth += 1,
            ')' | '}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::Syntax {
                        line: line_no,
                        col: col + 1,
                        message: "unbalanced closing bracket".into(),
                    });
                }
            }
            _ => {}
        }
        if ch.is_whitespace() && depth == 0 {
            if !cur.is_empty() {
                out.push(Token {
                    text: std::mem::take(&mut cur),
                    col: start,
                });
            }
        } else {
            if cur.is_empty() {
                start = col + 1;
            }
            cur.push(ch);
        }
    }
    if depth != 0 {
        return Err(Error::Syntax {
            line: line_no,
            col: line.chars().count(),
            message: "unbalanced opening bracket".into(),
        });
    }
    if !cur.is_empty() {
        out.push(Token {
            text: cur,
            col: start,
        });
    }
    // `SIN (0 1 1k)`: glue a parenthesised group onto the preceding word.
    let mut merged: Vec<Token> = Vec::with_capacity(out.len());
    for t in out {
        match merged.last_mut() {
            Some(prev)
                if t.text.starts_with('(')
                    && prev.text.chars().all(|c| c.is_ascii_alphabetic()) =>
            {
                prev.text.push_str(&t.text);
            }
            _ => merged.push(t),
        }
    }
    Ok(merged)
}

fn strip_braces(s: &str) -> &str {
    s.strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .unwrap_or(s)
}

fn strip_comment(line: &str) -> &str {
    match line.find(';') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn is_ground(name: &str) -> bool {
    name == "0" || name.eq_ignore_ascii_case("gnd")
}

fn parse_distribution(text: &str, line: usize, col: usize) -> Result<Distribution> {
    let lower = text.to_ascii_lowercase();
    let bad = |message: String| Error::Syntax { line, col, message };
    let args = |name: &str| -> Result<Vec<f64>> {
        let inner = lower
            .strip_prefix(name)
            .and_then(|r| r.trim().strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| bad(format!("expected `{name}(...)`")))?;
        inner
            .split([',', ' '])
            .filter(|s| !s.is_empty())
            .map(|s| parse_number(s).ok_or_else(|| bad(format!("bad number `{s}`"))))
            .collect()
    };
    match lower.as_str() {
        "gaussian" | "normal" => Ok(Distribution::Gaussian),
        "uniform" => Ok(Distribution::Uniform),
        s if s.starts_with("gamma") => match args("gamma")?.as_slice() {
            [g] => Distribution::gamma(*g),
            _ => Err(bad("gamma takes one shape parameter".into())),
        },
        s if s.starts_with("beta") => match args("beta")?.as_slice() {
            [a, b] => Distribution::beta(*a, *b),
            _ => Err(bad("beta takes two parameters".into())),
        },
        _ => Err(bad(format!("unknown distribution `{text}`"))),
    }
}

/// Device read from the netlist before node indices are assigned.
struct RawDevice {
    name: String,
    kind: DeviceKind,
    nodes: Vec<String>,
    line: usize,
}

struct Reader {
    vars: Vec<String>,
    params: Vec<RandomParam>,
    devices: Vec<RawDevice>,
    analyses: Vec<Analysis>,
    pss_auto_node: Option<(String, usize)>,
    ics: Vec<(String, f64, usize)>,
}

impl Reader {
    fn expr(&self, tok: &Token, line: usize) -> Result<ParamExpr> {
        ParamExpr::parse(strip_braces(&tok.text), &self.vars, line, tok.col)
    }

    fn number(&self, tok: &Token, line: usize) -> Result<f64> {
        parse_number(strip_braces(&tok.text)).ok_or_else(|| Error::Syntax {
            line,
            col: tok.col,
            message: format!("expected a number, found `{}`", tok.text),
        })
    }

    /// Parse trailing `key=value` arguments.
    fn keyword_args(
        &self,
        toks: &[Token],
        line: usize,
        allowed: &[&str],
    ) -> Result<HashMap<String, ParamExpr>> {
        let mut out = HashMap::new();
        for t in toks {
            let (k, v) = t.text.split_once('=').ok_or_else(|| Error::Syntax {
                line,
                col: t.col,
                message: format!("expected `key=value`, found `{}`", t.text),
            })?;
            let key = k.trim().to_ascii_lowercase();
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Syntax {
                    line,
                    col: t.col,
                    message: format!("unknown parameter `{k}`"),
                });
            }
            let vt = Token {
                text: v.to_string(),
                col: t.col + k.len() + 1,
            };
            out.insert(key, self.expr(&vt, line)?);
        }
        Ok(out)
    }

    fn waveform(&self, toks: &[Token], line: usize) -> Result<Waveform> {
        let bad = |col: usize, message: String| Error::Syntax { line, col, message };
        let toks = match toks.first() {
            Some(t) if t.text.eq_ignore_ascii_case("dc") => &toks[1..],
            _ => toks,
        };
        let first = toks
            .first()
            .ok_or_else(|| bad(0, "missing source value".into()))?;
        if toks.len() > 1 {
            return Err(bad(toks[1].col, format!("unexpected `{}`", toks[1].text)));
        }
        let lower = first.text.to_ascii_lowercase();
        let group = |name: &str| -> Option<Vec<Token>> {
            let rest = lower.strip_prefix(name)?;
            if !rest.starts_with('(') || !rest.ends_with(')') {
                return None;
            }
            let open = first.text.len() - rest.len();
            let inner = &first.text[open + 1..first.text.len() - 1];
            let base = first.col + open + 1;
            let mut args = Vec::new();
            let mut depth = 0;
            let mut cur = String::new();
            let mut start = 0;
            for (i, ch) in inner.chars().enumerate() {
                match ch {
                    '(' | '{' => depth += 1,
                    ')' | '}' => depth -= 1,
                    _ => {}
                }
                if depth == 0 && (ch.is_whitespace() || ch == ',') {
                    if !cur.is_empty() {
                        args.push(Token {
                            text: std::mem::take(&mut cur),
                            col: base + start,
                        });
                    }
                } else {
                    if cur.is_empty() {
                        start = i;
                    }
                    cur.push(ch);
                }
            }
            if !cur.is_empty() {
                args.push(Token {
                    text: cur,
                    col: base + start,
                });
            }
            Some(args)
        };
        if let Some(args) = group("sin") {
            if !(3..=6).contains(&args.len()) {
                return Err(bad(first.col, "SIN takes 3 to 6 arguments".into()));
            }
            let mut vals = args
                .iter()
                .map(|a| self.expr(a, line))
                .collect::<Result<Vec<_>>>()?;
            vals.resize_with(6, || ParamExpr::constant(0.0));
            let mut it = vals.into_iter();
            let mut next = || it.next().expect("six values");
            return Ok(Waveform::Sin {
                offset: next(),
                amplitude: next(),
                freq: next(),
                delay: next(),
                damping: next(),
                phase_deg: next(),
            });
        }
        if let Some(args) = group("pwl") {
            if args.is_empty() || args.len() % 2 != 0 {
                return Err(bad(first.col, "PWL takes time/value pairs".into()));
            }
            let mut points = Vec::with_capacity(args.len() / 2);
            for pair in args.chunks(2) {
                let t = self.number(&pair[0], line)?;
                if let Some(&(tp, _)) = points.last() {
                    if t <= tp {
                        return Err(bad(pair[0].col, "PWL times must increase".into()));
                    }
                }
                points.push((t, self.expr(&pair[1], line)?));
            }
            return Ok(Waveform::Pwl(points));
        }
        Ok(Waveform::Dc(self.expr(first, line)?))
    }

    fn device(&mut self, toks: &[Token], line: usize) -> Result<()> {
        let name = toks[0].text.clone();
        let letter = name.chars().next().unwrap_or(' ').to_ascii_uppercase();
        let need = |n: usize| -> Result<()> {
            if toks.len() < n {
                Err(Error::Syntax {
                    line,
                    col: toks.last().map_or(1, |t| t.col + t.text.len()),
                    message: format!("device `{name}` needs at least {} fields", n - 1),
                })
            } else {
                Ok(())
            }
        };
        let two_nodes = || vec![toks[1].text.clone(), toks[2].text.clone()];
        let positive = |e: ParamExpr, col: usize| -> Result<ParamExpr> {
            if e.nominal > 0.0 {
                Ok(e)
            } else {
                Err(Error::Syntax {
                    line,
                    col,
                    message: format!(
                        "`{name}` must have a positive nominal value, got {}",
                        e.nominal
                    ),
                })
            }
        };
        let (kind, nodes) = match letter {
            'R' | 'C' | 'L' => {
                need(4)?;
                if toks.len() > 4 {
                    return Err(Error::Syntax {
                        line,
                        col: toks[4].col,
                        message: format!("unexpected `{}`", toks[4].text),
                    });
                }
                let v = positive(self.expr(&toks[3], line)?, toks[3].col)?;
                let kind = match letter {
                    'R' => DeviceKind::Resistor { r: v },
                    'C' => DeviceKind::Capacitor { c: v },
                    _ => DeviceKind::Inductor { l: v },
                };
                (kind, two_nodes())
            }
            'V' | 'I' => {
                need(4)?;
                let wave = self.waveform(&toks[3..], line)?;
                let kind = if letter == 'V' {
                    DeviceKind::VSource { wave }
                } else {
                    DeviceKind::ISource { wave }
                };
                (kind, two_nodes())
            }
            'D' => {
                need(3)?;
                let mut kw = self.keyword_args(&toks[3..], line, &["is", "n"])?;
                let is = kw
                    .remove("is")
                    .unwrap_or_else(|| ParamExpr::constant(1e-14));
                let n = kw.remove("n").unwrap_or_else(|| ParamExpr::constant(1.0));
                (DeviceKind::Diode { is, n }, two_nodes())
            }
            'M' => {
                need(5)?;
                // Optional bulk terminal is accepted and ignored.
                let model_at =
                    if toks.len() > 5 && !toks[4].text.contains('=') && !is_polarity(&toks[4].text)
                    {
                        5
                    } else {
                        4
                    };
                let polarity = match toks[model_at].text.to_ascii_lowercase().as_str() {
                    "nmos" => MosPolarity::Nmos,
                    "pmos" => MosPolarity::Pmos,
                    other => {
                        return Err(Error::Syntax {
                            line,
                            col: toks[model_at].col,
                            message: format!("expected nmos or pmos, found `{other}`"),
                        })
                    }
                };
                let mut kw = self.keyword_args(
                    &toks[model_at + 1..],
                    line,
                    &["vto", "vt0", "kp", "lambda", "w", "l"],
                )?;
                let default_vt = match polarity {
                    MosPolarity::Nmos => 0.7,
                    MosPolarity::Pmos => -0.7,
                };
                let vt0 = kw
                    .remove("vto")
                    .or_else(|| kw.remove("vt0"))
                    .unwrap_or_else(|| ParamExpr::constant(default_vt));
                let mut get =
                    |k: &str, d: f64| kw.remove(k).unwrap_or_else(|| ParamExpr::constant(d));
                let kind = DeviceKind::Mosfet {
                    polarity,
                    vt0,
                    kp: get("kp", 2e-5),
                    lambda: get("lambda", 0.0),
                    w: get("w", 1e-6),
                    l: get("l", 1e-6),
                };
                let nodes = toks[1..4].iter().map(|t| t.text.clone()).collect();
                (kind, nodes)
            }
            'N' => {
                need(3)?;
                let mut kw = self.keyword_args(&toks[3..], line, &["g1", "g3"])?;
                let g1 = kw.remove("g1").ok_or_else(|| Error::Syntax {
                    line,
                    col: toks[0].col,
                    message: format!("`{name}` needs g1="),
                })?;
                let g3 = kw.remove("g3").unwrap_or_else(|| ParamExpr::constant(0.0));
                (DeviceKind::Nlcs { g1, g3 }, two_nodes())
            }
            _ => {
                return Err(Error::Syntax {
                    line,
                    col: toks[0].col,
                    message: format!("unknown device type `{name}`"),
                })
            }
        };
        if self
            .devices
            .iter()
            .any(|d| d.name.eq_ignore_ascii_case(&name))
        {
            return Err(Error::DuplicateDevice { line, name });
        }
        self.devices.push(RawDevice {
            name,
            kind,
            nodes,
            line,
        });
        Ok(())
    }

    fn control(&mut self, toks: &[Token], line: usize) -> Result<bool> {
        let card = toks[0].text.to_ascii_lowercase();
        let bad = |col: usize, message: &str| Error::Syntax {
            line,
            col,
            message: message.into(),
        };
        match card.as_str() {
            ".end" => return Ok(false),
            ".param" => self.param(toks, line)?,
            ".dc" | ".op" => self.analyses.push(Analysis::Dc),
            ".tran" => {
                let tstop = self.number(
                    toks.get(1)
                        .ok_or_else(|| bad(toks[0].col, ".tran needs a stop time"))?,
                    line,
                )?;
                let tol = toks.get(2).map(|t| self.number(t, line)).transpose()?;
                if tstop <= 0.0 {
                    return Err(bad(toks[1].col, "stop time must be positive"));
                }
                self.analyses.push(Analysis::Tran { tstop, tol });
            }
            ".pss" => {
                let first = toks
                    .get(1)
                    .ok_or_else(|| bad(toks[0].col, ".pss needs a period or `auto`"))?;
                if first.text.eq_ignore_ascii_case("auto") {
                    if toks.len() < 4 {
                        return Err(bad(first.col, ".pss auto <T0> <node> [lambda]"));
                    }
                    let t0 = self.number(&toks[2], line)?;
                    let lambda = toks.get(4).map(|t| self.number(t, line)).transpose()?;
                    self.pss_auto_node = Some((toks[3].text.clone(), line));
                    self.analyses.push(Analysis::Pss(PssCard::Autonomous {
                        t0,
                        node: usize::MAX,
                        lambda,
                    }));
                } else {
                    let period = self.number(first, line)?;
                    if period <= 0.0 {
                        return Err(bad(first.col, "period must be positive"));
                    }
                    self.analyses
                        .push(Analysis::Pss(PssCard::Forced { period }));
                }
            }
            ".ic" => {
                for t in &toks[1..] {
                    let lower = t.text.to_ascii_lowercase();
                    let parsed = lower
                        .strip_prefix("v(")
                        .and_then(|r| r.split_once(")="))
                        .map(|(node, val)| (t.text[2..2 + node.len()].to_string(), val));
                    let (node, val) =
                        parsed.ok_or_else(|| bad(t.col, "expected `v(node)=value`"))?;
                    let v = parse_number(val).ok_or_else(|| bad(t.col, "bad initial value"))?;
                    self.ics.push((node, v, line));
                }
            }
            _ => {
                return Err(bad(
                    toks[0].col,
                    &format!("unknown control card `{}`", toks[0].text),
                ))
            }
        }
        Ok(true)
    }

    fn param(&mut self, toks: &[Token], line: usize) -> Result<()> {
        if toks.len() < 3 {
            return Err(Error::Syntax {
                line,
                col: toks[0].col,
                message: "expected `param <name> <distribution>`".into(),
            });
        }
        let name = toks[1].text.clone();
        if !name
            .chars()
            .next()
            .is_some_and(|c| c.is_alphabetic() || c == '_')
            || !name.chars().all(|c| c.is_alphanumeric() || c == '_')
        {
            return Err(Error::Syntax {
                line,
                col: toks[1].col,
                message: format!("invalid parameter name `{name}`"),
            });
        }
        if self.vars.iter().any(|v| v.eq_ignore_ascii_case(&name)) {
            return Err(Error::Syntax {
                line,
                col: toks[1].col,
                message: format!("parameter `{name}` declared twice"),
            });
        }
        let text: Vec<&str> = toks[2..].iter().map(|t| t.text.as_str()).collect();
        let distribution = parse_distribution(&text.join(" "), line, toks[2].col)?;
        self.vars.push(name.clone());
        self.params.push(RandomParam { name, distribution });
        Ok(())
    }
}

fn is_polarity(s: &str) -> bool {
    s.eq_ignore_ascii_case("nmos") || s.eq_ignore_ascii_case("pmos")
}

/// Parse netlist text into a validated [`Circuit`].
pub fn parse_netlist(text: &str) -> Result<Circuit> {
    let mut r = Reader {
        vars: Vec::new(),
        params: Vec::new(),
        devices: Vec::new(),
        analyses: Vec::new(),
        pss_auto_node: None,
        ics: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw);
        if body.trim_start().starts_with('*') {
            continue;
        }
        let toks = tokenize(body, line)?;
        let Some(head) = toks.first() else { continue };
        if head.text.starts_with('.') {
            if !r.control(&toks, line)? {
                break;
            }
        } else if head.text.eq_ignore_ascii_case("param") {
            r.param(&toks, line)?;
        } else {
            r.device(&toks, line)?;
        }
    }
    if r.devices.is_empty() {
        return Err(Error::Netlist("no devices".into()));
    }

    let mut node_names: Vec<String> = Vec::new();
    let mut node_of = |name: &str| -> Option<usize> {
        if is_ground(name) {
            return None;
        }
        Some(match node_names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                node_names.push(name.to_string());
                node_names.len() - 1
            }
        })
    };
    let resolved: Vec<(RawDevice, Vec<Option<usize>>)> = r
        .devices
        .into_iter()
        .map(|d| {
            let nodes = d.nodes.iter().map(|n| node_of(n)).collect();
            (d, nodes)
        })
        .collect();
    let n_nodes = node_names.len();
    let mut unknowns: Vec<Unknown> = node_names
        .iter()
        .map(|n| Unknown {
            name: format!("v({n})"),
            kind: UnknownKind::Voltage,
        })
        .collect();
    let mut devices = Vec::with_capacity(resolved.len());
    for (d, nodes) in resolved {
        let branch = match d.kind {
            DeviceKind::Inductor { .. } | DeviceKind::VSource { .. } => {
                unknowns.push(Unknown {
                    name: format!("i({})", d.name),
                    kind: UnknownKind::Current,
                });
                Some(unknowns.len() - 1)
            }
            _ => None,
        };
        devices.push(Device {
            name: d.name,
            kind: d.kind,
            nodes,
            branch,
            line: d.line,
        });
    }
    debug_assert!(unknowns.len() >= n_nodes);

    let lookup = |name: &str, line: usize| -> Result<usize> {
        node_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownNode {
                line,
                name: name.to_string(),
            })
    };
    if let Some((name, line)) = &r.pss_auto_node {
        let idx = lookup(name, *line)?;
        for a in &mut r.analyses {
            if let Analysis::Pss(PssCard::Autonomous { node, .. }) = a {
                *node = idx;
            }
        }
    }
    let initial_conditions = r
        .ics
        .iter()
        .map(|(name, v, line)| Ok((lookup(name, *line)?, *v)))
        .collect::<Result<Vec<_>>>()?;

    Ok(Circuit {
        node_names,
        devices,
        params: r.params,
        unknowns,
        analyses: r.analyses,
        initial_conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divider_unknown_count() {
        let c =
            parse_netlist("* divider\nV1 in 0 1\nR1 in out 1k\nR2 out 0 1k\n.dc\n.end\n").unwrap();
        assert_eq!(c.size(), 3);
        assert_eq!(c.node_names, vec!["in", "out"]);
        assert_eq!(c.unknowns[2].name, "i(V1)");
        assert_eq!(c.analyses, vec![Analysis::Dc]);
    }

    #[test]
    fn current_driven_divider_has_one_unknown_per_node() {
        let c = parse_netlist("I1 0 1 1m\nR1 1 0 1k\nR2 1 0 1k\n").unwrap();
        assert_eq!(c.size(), 1);
    }

    #[test]
    fn declaration_round_trip() {
        let c = parse_netlist("param xi1 gaussian\nR1 1 0 1k*(1+0.1*xi1)\n").unwrap();
        assert_eq!(c.dim(), 1);
        assert_eq!(c.params[0].name, "xi1");
        assert_eq!(c.params[0].distribution, Distribution::Gaussian);
    }

    #[test]
    fn distributions_parse() {
        let c = parse_netlist(
            "param a uniform\nparam b gamma(2)\n.param c beta(2, 3)\nR1 1 0 {1k * (1 + 0.01*a + 0.01*b + 0.01*c)}\n",
        )
        .unwrap();
        assert_eq!(c.distributions()[1], Distribution::Gamma { shape: 2.0 });
        assert_eq!(
            c.distributions()[2],
            Distribution::Beta {
                alpha: 2.0,
                beta: 3.0
            }
        );
    }

    #[test]
    fn undeclared_variable() {
        match parse_netlist("param xi1 gaussian\nR1 1 0 1k*(1+0.1*xi9)\n") {
            Err(Error::UndeclaredVariable { line: 2, name }) => assert_eq!(name, "xi9"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            parse_netlist("R1 1 0 1k\nr1 1 0 2k\n"),
            Err(Error::DuplicateDevice { line: 2, .. })
        ));
        assert!(matches!(
            parse_netlist("R1 1 0 -1k\n"),
            Err(Error::Syntax {
                line: 1,
                col: 8,
                ..
            })
        ));
        assert!(matches!(
            parse_netlist("R1 1 0 1k\n.ic v(7)=1\n"),
            Err(Error::UnknownNode { line: 2, .. })
        ));
        assert!(matches!(
            parse_netlist("R1 1 0 1k\n.pss auto 1u 9\n"),
            Err(Error::UnknownNode { .. })
        ));
        assert!(matches!(
            parse_netlist("X1 1 0 1k\n"),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_netlist("R1 1 0 (1k\n"),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_netlist("param p weibull\nR1 1 0 1k\n"),
            Err(Error::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn sources_and_models() {
        let c = parse_netlist(
            "V1 1 0 SIN(0 1 1k)\nV2 2 0 PWL(0 0 1m 1 2m 1)\nI1 0 3 DC 1m\nD1 1 2 is=1e-12 n=1.5\n\
             M1 1 2 3 0 nmos kp=1e-4 w=10u\nN1 3 0 g1=1m g3=0.33m ; cubic\nR1 3 0 1k\n\
             .tran 1m 1e-7\n.pss 1m\n.ic v(1)=0.5 v(3)=-1\n",
        )
        .unwrap();
        assert!(matches!(
            c.devices[0].kind,
            DeviceKind::VSource {
                wave: Waveform::Sin { .. }
            }
        ));
        assert_eq!(c.breakpoints(), vec![0.0, 1e-3, 2e-3]);
        assert!(matches!(
            c.devices[4].kind,
            DeviceKind::Mosfet {
                polarity: MosPolarity::Nmos,
                ..
            }
        ));
        assert_eq!(c.devices[4].nodes.len(), 3);
        assert_eq!(c.initial_conditions, vec![(0, 0.5), (2, -1.0)]);
        assert_eq!(
            c.analyses[0],
            Analysis::Tran {
                tstop: 1e-3,
                tol: Some(1e-7)
            }
        );
    }

    #[test]
    fn autonomous_card() {
        let c = parse_netlist(
            "C1 out 0 1n\nL1 out 0 1u\nN1 out 0 g1=1m g3=0.33m\n.pss auto 200n out 0\n",
        )
        .unwrap();
        assert_eq!(
            c.analyses,
            vec![Analysis::Pss(PssCard::Autonomous {
                t0: 200e-9,
                node: 0,
                lambda: Some(0.0)
            })]
        );
    }
}
