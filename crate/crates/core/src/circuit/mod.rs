//! MNA circuit description with parameter-dependent devices.
//!
//! The circuit equations are `d/dt q(x, ξ) + f(x, ξ) = b(t, ξ)` where `x`
//! stacks the non-ground node voltages followed by the branch currents of
//! inductors and voltage sources, and `b = B u(t)`.

mod expr;
mod netlist;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polychaos::Distribution;

pub use expr::{parse_number, ParamExpr, MAX_PARAM_DEGREE};
pub use netlist::parse_netlist;

/// Thermal voltage at 300 K.
pub const THERMAL_VOLTAGE: f64 = 0.025852;

/// Exponent above which the diode characteristic continues linearly.
const DIODE_EXP_LIMIT: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownKind {
    Voltage,
    Current,
}

impl UnknownKind {
    /// Scale of the unknown itself (1 V, 1 mA).
    pub fn scale(self) -> f64 {
        match self {
            UnknownKind::Voltage => 1.0,
            UnknownKind::Current => 1e-3,
        }
    }

    /// Scale of the equation row paired with this unknown: KCL rows are
    /// currents, branch rows are voltages.
    pub fn residual_scale(self) -> f64 {
        match self {
            UnknownKind::Voltage => 1e-3,
            UnknownKind::Current => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unknown {
    pub name: String,
    pub kind: UnknownKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomParam {
    pub name: String,
    pub distribution: Distribution,
}

/// Time dependence of an independent source.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Waveform {
    Dc(ParamExpr),
    /// `offset + amplitude·e^{-damping (t - delay)}·sin(2π freq (t - delay) + phase)` after `delay`.
    Sin {
        offset: ParamExpr,
        amplitude: ParamExpr,
        freq: ParamExpr,
        delay: ParamExpr,
        damping: ParamExpr,
        phase_deg: ParamExpr,
    },
    Pwl(Vec<(f64, ParamExpr)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MosPolarity {
    Nmos,
    Pmos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceKind {
    Resistor {
        r: ParamExpr,
    },
    Capacitor {
        c: ParamExpr,
    },
    Inductor {
        l: ParamExpr,
    },
    VSource {
        wave: Waveform,
    },
    ISource {
        wave: Waveform,
    },
    Diode {
        is: ParamExpr,
        n: ParamExpr,
    },
    Mosfet {
        polarity: MosPolarity,
        vt0: ParamExpr,
        kp: ParamExpr,
        lambda: ParamExpr,
        w: ParamExpr,
        l: ParamExpr,
    },
    /// Cubic voltage-controlled current source `i = -g1·v + g3·v³`.
    Nlcs {
        g1: ParamExpr,
        g3: ParamExpr,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub name: String,
    pub kind: DeviceKind,
    /// Terminal nodes; `None` is ground.
    pub nodes: Vec<Option<usize>>,
    /// Index of the branch-current unknown, for inductors and voltage sources.
    pub branch: Option<usize>,
    pub line: usize,
}

/// Analysis cards found in a netlist.
#[derive(Debug, Clone, PartialEq)]
pub enum Analysis {
    Dc,
    Tran { tstop: f64, tol: Option<f64> },
    Pss(PssCard),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PssCard {
    Forced {
        period: f64,
    },
    Autonomous {
        t0: f64,
        node: usize,
        lambda: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub node_names: Vec<String>,
    pub devices: Vec<Device>,
    pub params: Vec<RandomParam>,
    pub unknowns: Vec<Unknown>,
    pub analyses: Vec<Analysis>,
    /// Initial conditions `(unknown index, value)` from `.ic` cards.
    pub initial_conditions: Vec<(usize, f64)>,
}

/// Device parameters evaluated at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundModel {
    Resistor {
        r: f64,
    },
    Capacitor {
        c: f64,
    },
    Inductor {
        l: f64,
    },
    VSource(BoundWave),
    ISource(BoundWave),
    Diode {
        is: f64,
        n: f64,
    },
    Mosfet {
        sign: f64,
        vt0: f64,
        beta: f64,
        lambda: f64,
    },
    Nlcs {
        g1: f64,
        g3: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundWave {
    Dc(f64),
    Sin {
        offset: f64,
        amplitude: f64,
        freq: f64,
        delay: f64,
        damping: f64,
        phase: f64,
    },
    Pwl(Vec<(f64, f64)>),
}

impl BoundWave {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            BoundWave::Dc(v) => *v,
            BoundWave::Sin {
                offset,
                amplitude,
                freq,
                delay,
                damping,
                phase,
            } => {
                if t < *delay {
                    offset + amplitude * phase.sin()
                } else {
                    let s = t - delay;
                    offset + amplitude * (-damping * s).exp() * (2.0 * PI * freq * s + phase).sin()
                }
            }
            BoundWave::Pwl(points) => pwl_value(points, t),
        }
    }
}

fn pwl_value(points: &[(f64, f64)], t: f64) -> f64 {
    match points {
        [] => 0.0,
        [first, ..] if t <= first.0 => first.1,
        [.., last] if t >= last.0 => last.1,
        _ => {
            let i = points.partition_point(|p| p.0 <= t);
            let (t0, v0) = points[i - 1];
            let (t1, v1) = points[i];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundDevice {
    pub name: String,
    pub nodes: Vec<Option<usize>>,
    pub branch: Option<usize>,
    pub model: BoundModel,
}

/// A circuit with every parameter evaluated at a fixed `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCircuit {
    pub n: usize,
    pub xi: Vec<f64>,
    pub devices: Vec<BoundDevice>,
}

/// Result of evaluating the MNA functions at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct QfEval {
    pub q: DVector<f64>,
    pub f: DVector<f64>,
    pub dq: DMatrix<f64>,
    pub df: DMatrix<f64>,
    /// `B u(t)`.
    pub b: DVector<f64>,
}

impl Circuit {
    pub fn parse(text: &str) -> Result<Self> {
        parse_netlist(text)
    }

    /// Number of MNA unknowns `n`.
    pub fn size(&self) -> usize {
        self.unknowns.len()
    }

    /// Number of random parameters `d`.
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn distributions(&self) -> Vec<Distribution> {
        self.params.iter().map(|p| p.distribution).collect()
    }

    pub fn unknown_index(&self, name: &str) -> Option<usize> {
        self.unknowns
            .iter()
            .position(|u| u.name.eq_ignore_ascii_case(name))
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
    }

    /// Highest polynomial degree of any device parameter in `ξ`.
    pub fn max_param_degree(&self) -> usize {
        let wave_exprs = |w: &Waveform| -> Vec<usize> {
            match w {
                Waveform::Dc(e) => vec![e.degree()],
                Waveform::Sin {
                    offset,
                    amplitude,
                    freq,
                    delay,
                    damping,
                    phase_deg,
                } => [offset, amplitude, freq, delay, damping, phase_deg]
                    .iter()
                    .map(|e| e.degree())
                    .collect(),
                Waveform::Pwl(p) => p.iter().map(|(_, e)| e.degree()).collect(),
            }
        };
        self.devices
            .iter()
            .flat_map(|d| match &d.kind {
                DeviceKind::Resistor { r: e }
                | DeviceKind::Capacitor { c: e }
                | DeviceKind::Inductor { l: e } => vec![e.degree()],
                DeviceKind::VSource { wave } | DeviceKind::ISource { wave } => wave_exprs(wave),
                DeviceKind::Diode { is, n } => vec![is.degree(), n.degree()],
                DeviceKind::Mosfet {
                    vt0,
                    kp,
                    lambda,
                    w,
                    l,
                    ..
                } => [vt0, kp, lambda, w, l].iter().map(|e| e.degree()).collect(),
                DeviceKind::Nlcs { g1, g3 } => vec![g1.degree(), g3.degree()],
            })
            .max()
            .unwrap_or(0)
    }

    pub fn scales(&self) -> Vec<f64> {
        self.unknowns.iter().map(|u| u.kind.scale()).collect()
    }

    pub fn residual_scales(&self) -> Vec<f64> {
        self.unknowns
            .iter()
            .map(|u| u.kind.residual_scale())
            .collect()
    }

    /// Independent sources in order; these index the columns of `B`.
    pub fn sources(&self) -> impl Iterator<Item = &Device> {
        self.devices.iter().filter(|d| {
            matches!(
                d.kind,
                DeviceKind::VSource { .. } | DeviceKind::ISource { .. }
            )
        })
    }

    /// Incidence matrix `B` (n × m) mapping source values to equation rows.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        let sources: Vec<&Device> = self.sources().collect();
        let mut b = DMatrix::zeros(self.size(), sources.len());
        for (col, dev) in sources.iter().enumerate() {
            match dev.kind {
                DeviceKind::VSource { .. } => b[(dev.branch.expect("vsource branch"), col)] = 1.0,
                _ => {
                    if let Some(a) = dev.nodes[0] {
                        b[(a, col)] -= 1.0;
                    }
                    if let Some(c) = dev.nodes[1] {
                        b[(c, col)] += 1.0;
                    }
                }
            }
        }
        b
    }

    /// Time points where source waveforms have corners.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .sources()
            .flat_map(|d| match &d.kind {
                DeviceKind::VSource {
                    wave: Waveform::Pwl(p),
                }
                | DeviceKind::ISource {
                    wave: Waveform::Pwl(p),
                } => p.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
                _ => Vec::new(),
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Initial state from `.ic` cards (unlisted unknowns are zero).
    pub fn initial_state(&self) -> Option<DVector<f64>> {
        if self.initial_conditions.is_empty() {
            return None;
        }
        let mut x = DVector::zeros(self.size());
        for &(i, v) in &self.initial_conditions {
            x[i] = v;
        }
        Some(x)
    }

    /// Evaluate every device parameter at `xi`.
    pub fn bind(&self, xi: &[f64]) -> Result<BoundCircuit> {
        if xi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: xi.len(),
            });
        }
        let devices = self
            .devices
            .iter()
            .map(|d| bind_device(d, xi))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundCircuit {
            n: self.size(),
            xi: xi.to_vec(),
            devices,
        })
    }
}

fn eval_param(dev: &Device, param: &str, e: &ParamExpr, xi: &[f64]) -> Result<f64> {
    let v = e.eval(xi);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter {
            device: dev.name.clone(),
            param: param.into(),
            value: v,
        })
    }
}

fn eval_positive(dev: &Device, param: &str, e: &ParamExpr, xi: &[f64]) -> Result<f64> {
    let v = eval_param(dev, param, e, xi)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter {
            device: dev.name.clone(),
            param: param.into(),
            value: v,
        })
    }
}

fn bind_wave(dev: &Device, w: &Waveform, xi: &[f64]) -> Result<BoundWave> {
    Ok(match w {
        Waveform::Dc(v) => BoundWave::Dc(eval_param(dev, "dc", v, xi)?),
        Waveform::Sin {
            offset,
            amplitude,
            freq,
            delay,
            damping,
            phase_deg,
        } => BoundWave::Sin {
            offset: eval_param(dev, "offset", offset, xi)?,
            amplitude: eval_param(dev, "amplitude", amplitude, xi)?,
            freq: eval_param(dev, "freq", freq, xi)?,
            delay: eval_param(dev, "delay", delay, xi)?,
            damping: eval_param(dev, "damping", damping, xi)?,
            phase: eval_param(dev, "phase", phase_deg, xi)?.to_radians(),
        },
        Waveform::Pwl(points) => BoundWave::Pwl(
            points
                .iter()
                .map(|(t, v)| Ok((*t, eval_param(dev, "pwl", v, xi)?)))
                .collect::<Result<_>>()?,
        ),
    })
}

fn bind_device(dev: &Device, xi: &[f64]) -> Result<BoundDevice> {
    let model = match &dev.kind {
        DeviceKind::Resistor { r } => BoundModel::Resistor {
            r: eval_positive(dev, "r", r, xi)?,
        },
        DeviceKind::Capacitor { c } => BoundModel::Capacitor {
            c: eval_positive(dev, "c", c, xi)?,
        },
        DeviceKind::Inductor { l } => BoundModel::Inductor {
            l: eval_positive(dev, "l", l, xi)?,
        },
        DeviceKind::VSource { wave } => BoundModel::VSource(bind_wave(dev, wave, xi)?),
        DeviceKind::ISource { wave } => BoundModel::ISource(bind_wave(dev, wave, xi)?),
        DeviceKind::Diode { is, n } => BoundModel::Diode {
            is: eval_positive(dev, "is", is, xi)?,
            n: eval_positive(dev, "n", n, xi)?,
        },
        DeviceKind::Mosfet {
            polarity,
            vt0,
            kp,
            lambda,
            w,
            l,
        } => {
            let beta = eval_positive(dev, "kp", kp, xi)? * eval_positive(dev, "w", w, xi)?
                / eval_positive(dev, "l", l, xi)?;
            let sign = match polarity {
                MosPolarity::Nmos => 1.0,
                MosPolarity::Pmos => -1.0,
            };
            BoundModel::Mosfet {
                sign,
                vt0: eval_param(dev, "vto", vt0, xi)?,
                beta,
                lambda: eval_param(dev, "lambda", lambda, xi)?,
            }
        }
        DeviceKind::Nlcs { g1, g3 } => BoundModel::Nlcs {
            g1: eval_param(dev, "g1", g1, xi)?,
            g3: eval_param(dev, "g3", g3, xi)?,
        },
    };
    Ok(BoundDevice {
        name: dev.name.clone(),
        nodes: dev.nodes.clone(),
        branch: dev.branch,
        model,
    })
}

/// See [`Circuit::bind`].
pub fn bind_parameters(circuit: &Circuit, xi: &[f64]) -> Result<BoundCircuit> {
    circuit.bind(xi)
}

/// Evaluate `q`, `f`, their Jacobians and `B u(t)` at `(x, ξ, t)`.
pub fn eval_qf(circuit: &Circuit, x: &DVector<f64>, xi: &[f64], t: f64) -> Result<QfEval> {
    Ok(circuit.bind(xi)?.eval(x, t))
}

/// Shockley diode current and conductance with a linear continuation of the
/// exponential beyond `DIODE_EXP_LIMIT`.
pub fn diode_iv(v: f64, is: f64, nvt: f64) -> (f64, f64) {
    let u = v / nvt;
    if u > DIODE_EXP_LIMIT {
        let e = DIODE_EXP_LIMIT.exp();
        (is * (e * (1.0 + u - DIODE_EXP_LIMIT) - 1.0), is * e / nvt)
    } else {
        let e = u.exp();
        (is * (e - 1.0), is * e / nvt)
    }
}

/// Square-law drain current for `vds >= 0`: `(id, ∂id/∂vgs, ∂id/∂vds)`.
fn mos_forward(vgs: f64, vds: f64, vt: f64, beta: f64, lambda: f64) -> (f64, f64, f64) {
    let vov = vgs - vt;
    if vov <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let clm = 1.0 + lambda * vds;
    if vds < vov {
        let core = vov * vds - 0.5 * vds * vds;
        (
            beta * core * clm,
            beta * vds * clm,
            beta * (vov - vds) * clm + beta * core * lambda,
        )
    } else {
        let core = 0.5 * vov * vov;
        (beta * core * clm, beta * vov * clm, beta * core * lambda)
    }
}

/// Level-1 MOSFET drain current (drain to source) for an n-type device,
/// symmetric in drain and source.
fn mos_nmos(vgs: f64, vds: f64, vt: f64, beta: f64, lambda: f64) -> (f64, f64, f64) {
    if vds >= 0.0 {
        mos_forward(vgs, vds, vt, beta, lambda)
    } else {
        let (i, fu, fw) = mos_forward(vgs - vds, -vds, vt, beta, lambda);
        (-i, -fu, fu + fw)
    }
}

/// `(id, gm, gds)` of a level-1 MOSFET with polarity `sign` (+1 n, -1 p).
pub fn mos_iv(sign: f64, vgs: f64, vds: f64, vt0: f64, beta: f64, lambda: f64) -> (f64, f64, f64) {
    let (i, gm, gds) = mos_nmos(sign * vgs, sign * vds, sign * vt0, beta, lambda);
    (sign * i, gm, gds)
}

#[inline]
fn volt(x: &DVector<f64>, node: Option<usize>) -> f64 {
    node.map_or(0.0, |i| x[i])
}

struct Stamper<'a> {
    q: &'a mut DVector<f64>,
    f: &'a mut DVector<f64>,
    dq: &'a mut DMatrix<f64>,
    df: &'a mut DMatrix<f64>,
    b: &'a mut DVector<f64>,
}

impl Stamper<'_> {
    /// Two-terminal current `i(v)` from `a` to `b` with conductance `g`.
    fn branch_current(&mut self, a: Option<usize>, c: Option<usize>, i: f64, g: f64) {
        if let Some(a) = a {
            self.f[a] += i;
            self.df[(a, a)] += g;
            if let Some(c) = c {
                self.df[(a, c)] -= g;
            }
        }
        if let Some(c) = c {
            self.f[c] -= i;
            self.df[(c, c)] += g;
            if let Some(a) = a {
                self.df[(c, a)] -= g;
            }
        }
    }

    fn branch_charge(&mut self, a: Option<usize>, c: Option<usize>, qv: f64, cap: f64) {
        if let Some(a) = a {
            self.q[a] += qv;
            self.dq[(a, a)] += cap;
            if let Some(c) = c {
                self.dq[(a, c)] -= cap;
            }
        }
        if let Some(c) = c {
            self.q[c] -= qv;
            self.dq[(c, c)] += cap;
            if let Some(a) = a {
                self.dq[(c, a)] -= cap;
            }
        }
    }

    /// Branch unknown `k` carries current from `a` to `c`; its row reads `va - vc`.
    fn branch_unknown(&mut self, a: Option<usize>, c: Option<usize>, k: usize, x: &DVector<f64>) {
        let ik = x[k];
        if let Some(a) = a {
            self.f[a] += ik;
            self.df[(a, k)] += 1.0;
            self.f[k] += x[a];
            self.df[(k, a)] += 1.0;
        }
        if let Some(c) = c {
            self.f[c] -= ik;
            self.df[(c, k)] -= 1.0;
            self.f[k] -= x[c];
            self.df[(k, c)] -= 1.0;
        }
    }
}

impl BoundCircuit {
    /// Source values `u(t)` in the column order of [`Circuit::input_matrix`].
    pub fn inputs(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.devices
                .iter()
                .filter(|d| matches!(d.model, BoundModel::VSource(_) | BoundModel::ISource(_)))
                .count(),
            self.devices.iter().filter_map(|d| match &d.model {
                BoundModel::VSource(w) | BoundModel::ISource(w) => Some(w.value(t)),
                _ => None,
            }),
        )
    }

    pub fn eval(&self, x: &DVector<f64>, t: f64) -> QfEval {
        let n = self.n;
        let mut q = DVector::zeros(n);
        let mut f = DVector::zeros(n);
        let mut dq = DMatrix::zeros(n, n);
        let mut df = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut s = Stamper {
            q: &mut q,
            f: &mut f,
            dq: &mut dq,
            df: &mut df,
            b: &mut b,
        };
        for dev in &self.devices {
            let a = dev.nodes[0];
            let c = dev.nodes.get(1).copied().flatten();
            match &dev.model {
                BoundModel::Resistor { r } => {
                    let g = 1.0 / r;
                    let v = volt(x, a) - volt(x, c);
                    s.branch_current(a, c, g * v, g);
                }
                BoundModel::Capacitor { c: cap } => {
                    let v = volt(x, a) - volt(x, c);
                    s.branch_charge(a, c, cap * v, *cap);
                }
                BoundModel::Inductor { l } => {
                    let k = dev.branch.expect("inductor branch");
                    s.branch_unknown(a, c, k, x);
                    s.q[k] -= l * x[k];
                    s.dq[(k, k)] -= l;
                }
                BoundModel::VSource(w) => {
                    let k = dev.branch.expect("vsource branch");
                    s.branch_unknown(a, c, k, x);
                    s.b[k] += w.value(t);
                }
                BoundModel::ISource(w) => {
                    let i = w.value(t);
                    if let Some(a) = a {
                        s.b[a] -= i;
                    }
                    if let Some(c) = c {
                        s.b[c] += i;
                    }
                }
                BoundModel::Diode { is, n: ideality } => {
                    let v = volt(x, a) - volt(x, c);
                    let (i, g) = diode_iv(v, *is, ideality * THERMAL_VOLTAGE);
                    s.branch_current(a, c, i, g);
                }
                BoundModel::Nlcs { g1, g3 } => {
                    let v = volt(x, a) - volt(x, c);
                    s.branch_current(a, c, -g1 * v + g3 * v * v * v, -g1 + 3.0 * g3 * v * v);
                }
                BoundModel::Mosfet {
                    sign,
                    vt0,
                    beta,
                    lambda,
                } => {
                    let (d, g, src) = (dev.nodes[0], dev.nodes[1], dev.nodes[2]);
                    let vs = volt(x, src);
                    let (id, gm, gds) = mos_iv(
                        *sign,
                        volt(x, g) - vs,
                        volt(x, d) - vs,
                        *vt0,
                        *beta,
                        *lambda,
                    );
                    // id flows drain -> source; derivatives w.r.t. (vd, vg, vs).
                    let partials = [(d, gds), (g, gm), (src, -gm - gds)];
                    if let Some(dn) = d {
                        s.f[dn] += id;
                        for &(node, gv) in &partials {
                            if let Some(j) = node {
                                s.df[(dn, j)] += gv;
                            }
                        }
                    }
                    if let Some(sn) = src {
                        s.f[sn] -= id;
                        for &(node, gv) in &partials {
                            if let Some(j) = node {
                                s.df[(sn, j)] -= gv;
                            }
                        }
                    }
                }
            }
        }
        QfEval { q, f, dq, df, b }
    }

    /// Largest fraction of the Newton update `dx` that keeps every diode
    /// junction within the usual critical-voltage step limit.
    pub fn limit_scale(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        let mut alpha: f64 = 1.0;
        for dev in &self.devices {
            if let BoundModel::Diode { is, n } = dev.model {
                let (a, c) = (dev.nodes[0], dev.nodes[1]);
                let v_old = volt(x, a) - volt(x, c);
                let dv = volt(dx, a) - volt(dx, c);
                let v_new = v_old + dv;
                let v_lim = junction_limit(v_new, v_old, n * THERMAL_VOLTAGE, is);
                if v_lim != v_new && dv != 0.0 {
                    let frac = ((v_lim - v_old) / dv).clamp(0.01, 1.0);
                    alpha = alpha.min(frac);
                }
            }
        }
        alpha
    }

    /// Power absorbed by device `idx` at state `x` and time `t`.
    pub fn device_power(&self, idx: usize, x: &DVector<f64>, t: f64) -> f64 {
        let dev = &self.devices[idx];
        let a = dev.nodes[0];
        let c = dev.nodes.get(1).copied().flatten();
        let v = volt(x, a) - volt(x, c);
        match &dev.model {
            BoundModel::Resistor { r } => v * v / r,
            BoundModel::Capacitor { .. } | BoundModel::Inductor { .. } => {
                // Reactive elements absorb instantaneous power v·i; the current
                // of a capacitor is not a state, so only inductors report it.
                match dev.branch {
                    Some(k) => v * x[k],
                    None => 0.0,
                }
            }
            BoundModel::VSource(_) => v * x[dev.branch.expect("vsource branch")],
            BoundModel::ISource(w) => v * w.value(t),
            BoundModel::Diode { is, n } => v * diode_iv(v, *is, n * THERMAL_VOLTAGE).0,
            BoundModel::Nlcs { g1, g3 } => v * (-g1 * v + g3 * v * v * v),
            BoundModel::Mosfet {
                sign,
                vt0,
                beta,
                lambda,
            } => {
                let (d, g, s) = (dev.nodes[0], dev.nodes[1], dev.nodes[2]);
                let vs = volt(x, s);
                let vds = volt(x, d) - vs;
                let (id, _, _) = mos_iv(*sign, volt(x, g) - vs, vds, *vt0, *beta, *lambda);
                vds * id
            }
        }
    }
}

/// SPICE-style junction voltage limiting.
fn junction_limit(v_new: f64, v_old: f64, nvt: f64, is: f64) -> f64 {
    let vcrit = nvt * (nvt / (std::f64::consts::SQRT_2 * is)).ln();
    if v_new > vcrit && (v_new - v_old).abs() > 2.0 * nvt {
        if v_old > 0.0 {
            let arg = 1.0 + (v_new - v_old) / nvt;
            if arg > 0.0 {
                v_old + nvt * arg.ln()
            } else {
                vcrit
            }
        } else {
            nvt * (v_new / nvt).ln()
        }
    } else {
        v_new
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(text: &str, xi: &[f64], x: &[f64]) {
        let c = Circuit::parse(text).unwrap();
        let bc = c.bind(xi).unwrap();
        let x = DVector::from_row_slice(x);
        let e = bc.eval(&x, 0.0);
        let n = c.size();
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1e-3);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let ep = bc.eval(&xp, 0.0);
            let em = bc.eval(&xm, 0.0);
            for i in 0..n {
                let fd_f = (ep.f[i] - em.f[i]) / (2.0 * h);
                let fd_q = (ep.q[i] - em.q[i]) / (2.0 * h);
                let tol_f = 1e-6 * e.df[(i, j)].abs() + 1e-12;
                let tol_q = 1e-6 * e.dq[(i, j)].abs() + 1e-18;
                assert!(
                    (fd_f - e.df[(i, j)]).abs() <= tol_f,
                    "df[{i},{j}] {fd_f} vs {}",
                    e.df[(i, j)]
                );
                assert!(
                    (fd_q - e.dq[(i, j)]).abs() <= tol_q,
                    "dq[{i},{j}] {fd_q} vs {}",
                    e.dq[(i, j)]
                );
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        fd_check(
            "param xi1 uniform\nV1 1 0 1\nR1 1 2 1k*(1+0.1*xi1)\nD1 2 3\nC1 3 0 1u\nL1 3 4 1m\nR2 4 0 2k\nN1 2 0 g1=1m g3=0.3m\n",
            &[0.3],
            &[1.0, 0.62, 0.31, 0.12, -1.2e-3, 2e-4],
        );
        fd_check(
            "V1 d 0 3\nV2 g 0 2\nM1 d g s nmos vto=0.7 kp=100u w=10u l=1u lambda=0.02\nR1 s 0 1k\nM2 d g2 s pmos vto=-0.6 kp=50u\nR2 g2 0 1k\n",
            &[],
            &[3.0, 2.0, 0.4, -0.3, -1e-4, -2e-3],
        );
        // Reverse-biased MOSFET (vds < 0) and linear region.
        fd_check(
            "V1 d 0 -0.2\nV2 g 0 2\nM1 d g s nmos vto=0.7 kp=100u lambda=0.05\nR1 s 0 1k\n",
            &[],
            &[-0.2, 2.0, 0.05, 1e-4, 1e-5],
        );
    }

    #[test]
    fn divider_residual_vanishes_at_solution() {
        let c = Circuit::parse("V1 in 0 1\nR1 in out 1k\nR2 out 0 1k\n").unwrap();
        assert_eq!(c.size(), 3);
        let x = DVector::from_vec(vec![1.0, 0.5, -0.5e-3]);
        let e = eval_qf(&c, &x, &[], 0.0).unwrap();
        assert!((&e.f - &e.b).amax() < 1e-15);
    }

    #[test]
    fn capacitor_stamp() {
        let c = Circuit::parse("C1 1 0 1u\nR1 1 0 1k\n").unwrap();
        let x = DVector::from_vec(vec![2.0]);
        let e = eval_qf(&c, &x, &[], 0.0).unwrap();
        assert!((e.q[0] - 2e-6).abs() < 1e-20);
        assert_eq!(e.dq[(0, 0)], 1e-6);
    }

    #[test]
    fn diode_at_zero_bias() {
        let c = Circuit::parse("D1 1 0\nR1 1 0 1k\n").unwrap();
        let bc = c.bind(&[]).unwrap();
        let x = DVector::from_vec(vec![0.0]);
        let e = bc.eval(&x, 0.0);
        assert_eq!(e.f[0], 0.0);
        assert!((e.df[(0, 0)] - (1e-14 / THERMAL_VOLTAGE + 1e-3)).abs() < 1e-18);
        // Huge forward bias stays finite.
        let e = bc.eval(&DVector::from_vec(vec![50.0]), 0.0);
        assert!(e.f[0].is_finite() && e.df[(0, 0)].is_finite());
    }

    #[test]
    fn bound_parameter_values() {
        let c = Circuit::parse("param xi1 gaussian\nR1 1 0 1k*(1+0.1*xi1)\n").unwrap();
        let b = c.bind(&[1.0]).unwrap();
        assert_eq!(b.devices[0].model, BoundModel::Resistor { r: 1100.0 });
        let b0 = c.bind(&[0.0]).unwrap();
        assert_eq!(b0.devices[0].model, BoundModel::Resistor { r: 1000.0 });

        let c = Circuit::parse("param b beta(2,3)\nC1 1 0 1u*(0.9+0.2*b)\nR1 1 0 1k\n").unwrap();
        match c.bind(&[0.5]).unwrap().devices[0].model {
            BoundModel::Capacitor { c } => assert!((c - 1e-6).abs() < 1e-20),
            ref m => panic!("{m:?}"),
        }
        let c = Circuit::parse("param xi1 gaussian\nR1 1 0 1k*(1+0.1*xi1)\n").unwrap();
        assert!(matches!(
            c.bind(&[-20.0]),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn vsource_rows_carry_no_charge() {
        let c = Circuit::parse("V1 1 0 SIN(0 1 1k)\nC1 1 2 1u\nL1 2 0 1m\nV2 2 3 0\nR1 3 0 10\n")
            .unwrap();
        let bc = c.bind(&[]).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.1, 1e-3, -2e-3, 5e-4]);
        let e = bc.eval(&x, 1e-4);
        for dev in &c.devices {
            if let (DeviceKind::VSource { .. }, Some(k)) = (&dev.kind, dev.branch) {
                assert_eq!(e.q[k], 0.0);
                assert!(e.dq.row(k).iter().all(|&v| v == 0.0));
            }
        }
        let bu = c.input_matrix() * bc.inputs(1e-4);
        assert!((bu - &e.b).amax() < 1e-15);
    }

    #[test]
    fn stamps_are_additive() {
        let small = Circuit::parse("V1 1 0 1\nR1 1 2 1k\nD1 2 0\n").unwrap();
        let big = Circuit::parse("V1 1 0 1\nR1 1 2 1k\nD1 2 0\nR9 2 0 3k\n").unwrap();
        let x = DVector::from_vec(vec![1.0, 0.6, -4e-4]);
        let es = eval_qf(&small, &x, &[], 0.0).unwrap();
        let eb = eval_qf(&big, &x, &[], 0.0).unwrap();
        let mut f = eb.f.clone();
        f[1] -= 0.6 / 3000.0;
        assert_eq!(f, es.f);
        assert_eq!(eb.q, es.q);
    }

    #[test]
    fn junction_limit_caps_large_steps() {
        let nvt = THERMAL_VOLTAGE;
        let v = junction_limit(1.0, 0.0, nvt, 1e-14);
        assert!(v < 0.2 && v > 0.0);
        assert_eq!(junction_limit(0.3, 0.29, nvt, 1e-14), 0.3);
    }

    #[test]
    fn sin_and_pwl_values() {
        let w = BoundWave::Sin {
            offset: 0.5,
            amplitude: 1.0,
            freq: 1.0,
            delay: 0.0,
            damping: 0.0,
            phase: 0.0,
        };
        assert!((w.value(0.25) - 1.5).abs() < 1e-15);
        let p = BoundWave::Pwl(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)]);
        assert_eq!(p.value(0.5), 1.0);
        assert_eq!(p.value(5.0), 2.0);
        assert_eq!(p.value(-1.0), 0.0);
    }
}
