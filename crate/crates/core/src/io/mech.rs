//! `.mech` mechanism description format.
//!
//! ```text
//! format: 1
//! name: crank
//! gravity: 0 -9.81 0
//!
//! link crank {
//!   mass: 0.5
//!   com: 0.05 0 0
//!   inertia: 0.0001 0.0005 0.0005 0 0 0   # ixx iyy izz ixy ixz iyz
//! }
//! joint crank_pivot {
//!   type: revolute
//!   parent: base
//!   child: crank
//!   xyz: 0 0 0
//!   rpy: 0 0 0
//!   axis: 0 0 1
//!   actuated: false
//!   limits: -3.2 3.2
//! }
//! ```
//!
//! Other blocks: `loop`, `contact`, `actuator` and an unnamed `selection`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use nalgebra as na;
use na::{Matrix3, Vector3};
use thiserror::Error;

use crate::math::rpy_to_matrix;
use crate::model::{ActuatorSpec, Contact, FrameRef, Joint, JointKind, Link, LoopConstraint, MechanismModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownReference,
    DuplicateName,
    BadMask,
    BadLimits,
    InvalidModel,
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self.kind {
            ParseErrorKind::Syntax => "syntax_error",
            ParseErrorKind::UnknownReference => "unknown_reference",
            ParseErrorKind::DuplicateName => "duplicate_name",
            ParseErrorKind::BadMask => "bad_mask",
            ParseErrorKind::BadLimits => "bad_limits",
            ParseErrorKind::InvalidModel => "invalid_model",
        }
    }
}

pub const MASK_NAMES: [&str; 6] = ["x", "y", "z", "rx", "ry", "rz"];

#[derive(Clone, Debug, PartialEq)]
pub struct LinkRecord {
    pub name: String,
    pub mass: f64,
    pub com: [f64; 3],
    /// ixx iyy izz ixy ixz iyz
    pub inertia: [f64; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointRecord {
    pub name: String,
    pub kind: JointKind,
    pub parent: Option<String>,
    pub child: String,
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
    pub axis: [f64; 3],
    pub actuated: bool,
    pub limits: Option<(f64, f64)>,
    /// Nominal coordinate. For a floating joint, `xyz`/`rpy` give the nominal base pose.
    pub home: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopRecord {
    pub name: String,
    pub a_link: String,
    pub a_xyz: [f64; 3],
    pub a_rpy: [f64; 3],
    pub u_link: String,
    pub u_xyz: [f64; 3],
    pub u_rpy: [f64; 3],
    pub mask: [bool; 6],
    pub constants: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactRecord {
    pub name: String,
    pub link: String,
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActuatorRecord {
    pub name: String,
    pub joint: String,
    pub lead: f64,
    pub efficiency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechanismDocument {
    pub format: u32,
    pub name: String,
    pub gravity: [f64; 3],
    pub links: Vec<LinkRecord>,
    pub joints: Vec<JointRecord>,
    pub loops: Vec<LoopRecord>,
    pub contacts: Vec<ContactRecord>,
    pub actuators: Vec<ActuatorRecord>,
    pub selection: Vec<String>,
}

impl Default for MechanismDocument {
    fn default() -> Self {
        MechanismDocument {
            format: 1,
            name: String::new(),
            gravity: [0.0, 0.0, -9.81],
            links: Vec::new(),
            joints: Vec::new(),
            loops: Vec::new(),
            contacts: Vec::new(),
            actuators: Vec::new(),
            selection: Vec::new(),
        }
    }
}

/// Source positions of records and fields, used for error locations.
#[derive(Default, Debug)]
struct Spans {
    blocks: HashMap<(&'static str, usize), (usize, usize)>,
    fields: HashMap<(&'static str, usize, String), (usize, usize)>,
}

impl Spans {
    fn block(&self, kind: &'static str, i: usize) -> (usize, usize) {
        self.blocks.get(&(kind, i)).copied().unwrap_or((0, 0))
    }
    fn field(&self, kind: &'static str, i: usize, key: &str) -> (usize, usize) {
        self.fields.get(&(kind, i, key.to_string())).copied().unwrap_or_else(|| self.block(kind, i))
    }
}

fn err(kind: ParseErrorKind, at: (usize, usize), message: impl Into<String>) -> ParseError {
    ParseError { kind, line: at.0, column: at.1, message: message.into() }
}

struct Field {
    key: String,
    value: String,
    line: usize,
    col: usize,
}

struct Block {
    keyword: String,
    name: Option<String>,
    line: usize,
    col: usize,
    fields: Vec<Field>,
}

fn strip_comment(s: &str) -> &str {
    match s.find('#') {
        Some(i) => &s[..i],
        None => s,
    }
}

fn split_kv(raw: &str, line: usize) -> Result<Field, ParseError> {
    let text = strip_comment(raw);
    let indent = text.len() - text.trim_start().len();
    let Some(ci) = text.find(':') else {
        return Err(err(ParseErrorKind::Syntax, (line, indent + 1), format!("expected `key: value`, found `{}`", text.trim())));
    };
    let key = text[..ci].trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(err(ParseErrorKind::Syntax, (line, indent + 1), format!("bad key `{key}`")));
    }
    let vstart = ci + 1 + (text[ci + 1..].len() - text[ci + 1..].trim_start().len());
    Ok(Field { key: key.to_string(), value: text[ci + 1..].trim().to_string(), line, col: vstart + 1 })
}

fn lex(text: &str) -> Result<(Vec<Field>, Vec<Block>), ParseError> {
    let mut top = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    let mut open: Option<Block> = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let body = strip_comment(raw);
        let t = body.trim();
        if t.is_empty() {
            continue;
        }
        let col = body.len() - body.trim_start().len() + 1;
        if let Some(b) = open.as_mut() {
            if t == "}" {
                blocks.push(open.take().unwrap());
                continue;
            }
            if t.ends_with('{') {
                return Err(err(ParseErrorKind::Syntax, (line, col), format!("block `{}` opened before `}}`", b.keyword)));
            }
            b.fields.push(split_kv(raw, line)?);
            continue;
        }
        if let Some(head) = t.strip_suffix('{') {
            let mut parts = head.split_whitespace();
            let keyword = parts.next().unwrap_or("").to_string();
            let name = parts.next().map(str::to_string);
            if let Some(extra) = parts.next() {
                return Err(err(ParseErrorKind::Syntax, (line, col), format!("unexpected `{extra}` in block header")));
            }
            if !matches!(keyword.as_str(), "link" | "joint" | "loop" | "contact" | "actuator" | "selection") {
                return Err(err(ParseErrorKind::Syntax, (line, col), format!("unknown block `{keyword}`")));
            }
            if keyword != "selection" && name.is_none() {
                return Err(err(ParseErrorKind::Syntax, (line, col), format!("block `{keyword}` needs a name")));
            }
            open = Some(Block { keyword, name, line, col, fields: Vec::new() });
            continue;
        }
        if t == "}" {
            return Err(err(ParseErrorKind::Syntax, (line, col), "unmatched `}`"));
        }
        top.push(split_kv(raw, line)?);
    }
    if let Some(b) = open {
        return Err(err(ParseErrorKind::Syntax, (last_line.max(b.line), 1), format!("block `{}` is not closed", b.keyword)));
    }
    Ok((top, blocks))
}

fn nums(f: &Field, count: usize) -> Result<Vec<f64>, ParseError> {
    let toks: Vec<&str> = f.value.split_whitespace().collect();
    if toks.len() != count {
        return Err(err(ParseErrorKind::Syntax, (f.line, f.col), format!("`{}` expects {count} numbers, found {}", f.key, toks.len())));
    }
    toks.iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(ParseErrorKind::Syntax, (f.line, f.col), format!("`{t}` is not a finite number")))
        })
        .collect()
}

fn vec3(f: &Field) -> Result<[f64; 3], ParseError> {
    let v = nums(f, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn num(f: &Field) -> Result<f64, ParseError> {
    Ok(nums(f, 1)?[0])
}

fn ident(f: &Field) -> Result<String, ParseError> {
    let v = f.value.trim();
    if v.is_empty() || v.contains(char::is_whitespace) {
        return Err(err(ParseErrorKind::Syntax, (f.line, f.col), format!("`{}` expects one name", f.key)));
    }
    Ok(v.to_string())
}

fn boolean(f: &Field) -> Result<bool, ParseError> {
    match f.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(err(ParseErrorKind::Syntax, (f.line, f.col), format!("expected true or false, found `{other}`"))),
    }
}

fn unknown_key(f: &Field, block: &str) -> ParseError {
    err(ParseErrorKind::Syntax, (f.line, f.col.saturating_sub(f.key.len() + 2).max(1)), format!("unknown key `{}` in {block}", f.key))
}

fn required<T>(v: Option<T>, b: &Block, key: &str) -> Result<T, ParseError> {
    v.ok_or_else(|| err(ParseErrorKind::Syntax, (b.line, b.col), format!("{} `{}` is missing `{key}`", b.keyword, b.name.as_deref().unwrap_or(""))))
}

/// Parse and validate a mechanism document.
pub fn parse_mechanism(text: &str) -> Result<MechanismDocument, ParseError> {
    let (top, blocks) = lex(text)?;
    let mut doc = MechanismDocument { format: 0, gravity: [0.0, 0.0, -9.81], ..Default::default() };
    let mut spans = Spans::default();
    let mut seen_format = false;
    for (i, f) in top.iter().enumerate() {
        match f.key.as_str() {
            "format" => {
                if i != 0 {
                    return Err(err(ParseErrorKind::Syntax, (f.line, 1), "`format` must be the first field"));
                }
                if f.value != "1" {
                    return Err(err(ParseErrorKind::Syntax, (f.line, f.col), format!("unsupported format `{}`", f.value)));
                }
                doc.format = 1;
                seen_format = true;
            }
            "name" => doc.name = ident(f)?,
            "gravity" => doc.gravity = vec3(f)?,
            _ => return Err(unknown_key(f, "document")),
        }
    }
    if !seen_format {
        return Err(err(ParseErrorKind::Syntax, (1, 1), "missing leading `format: 1`"));
    }
    let mut selection_seen = false;
    for b in &blocks {
        let name = b.name.clone().unwrap_or_default();
        let at = (b.line, b.col);
        match b.keyword.as_str() {
            "link" => {
                let i = doc.links.len();
                spans.blocks.insert(("link", i), at);
                let mut rec = LinkRecord { name, mass: 0.0, com: [0.0; 3], inertia: [0.0; 6] };
                for f in &b.fields {
                    spans.fields.insert(("link", i, f.key.clone()), (f.line, f.col));
                    match f.key.as_str() {
                        "mass" => rec.mass = num(f)?,
                        "com" => rec.com = vec3(f)?,
                        "inertia" => {
                            let v = nums(f, 6)?;
                            rec.inertia.copy_from_slice(&v);
                        }
                        _ => return Err(unknown_key(f, "link")),
                    }
                }
                doc.links.push(rec);
            }
            "joint" => {
                let i = doc.joints.len();
                spans.blocks.insert(("joint", i), at);
                let mut kind = None;
                let mut parent = None;
                let mut child = None;
                let mut rec = JointRecord {
                    name,
                    kind: JointKind::Revolute,
                    parent: None,
                    child: String::new(),
                    xyz: [0.0; 3],
                    rpy: [0.0; 3],
                    axis: [0.0, 0.0, 1.0],
                    actuated: false,
                    limits: None,
                    home: 0.0,
                };
                for f in &b.fields {
                    spans.fields.insert(("joint", i, f.key.clone()), (f.line, f.col));
                    match f.key.as_str() {
                        "type" => {
                            kind = Some(match f.value.as_str() {
                                "revolute" => JointKind::Revolute,
                                "prismatic" => JointKind::Prismatic,
                                "floating" => JointKind::Floating,
                                other => {
                                    return Err(err(ParseErrorKind::Syntax, (f.line, f.col), format!("unknown joint type `{other}`")))
                                }
                            })
                        }
                        "parent" => parent = Some(ident(f)?),
                        "child" => child = Some(ident(f)?),
                        "xyz" => rec.xyz = vec3(f)?,
                        "rpy" => rec.rpy = vec3(f)?,
                        "axis" => rec.axis = vec3(f)?,
                        "actuated" => rec.actuated = boolean(f)?,
                        "home" => rec.home = num(f)?,
                        "limits" => {
                            let v = nums(f, 2)?;
                            rec.limits = Some((v[0], v[1]));
                        }
                        _ => return Err(unknown_key(f, "joint")),
                    }
                }
                rec.kind = required(kind, b, "type")?;
                rec.child = required(child, b, "child")?;
                rec.parent = match (rec.kind, parent) {
                    (JointKind::Floating, Some(p)) if p == "world" => None,
                    (_, p) => p,
                };
                if rec.kind != JointKind::Floating && rec.parent.is_none() {
                    return Err(err(ParseErrorKind::Syntax, at, format!("joint `{}` is missing `parent`", rec.name)));
                }
                doc.joints.push(rec);
            }
            "loop" => {
                let i = doc.loops.len();
                spans.blocks.insert(("loop", i), at);
                let (mut a_link, mut u_link, mut mask_f, mut consts_f) = (None, None, None, None);
                let mut rec = LoopRecord {
                    name,
                    a_link: String::new(),
                    a_xyz: [0.0; 3],
                    a_rpy: [0.0; 3],
                    u_link: String::new(),
                    u_xyz: [0.0; 3],
                    u_rpy: [0.0; 3],
                    mask: [false; 6],
                    constants: Vec::new(),
                };
                for f in &b.fields {
                    spans.fields.insert(("loop", i, f.key.clone()), (f.line, f.col));
                    match f.key.as_str() {
                        "a_link" => a_link = Some(ident(f)?),
                        "a_xyz" => rec.a_xyz = vec3(f)?,
                        "a_rpy" => rec.a_rpy = vec3(f)?,
                        "u_link" => u_link = Some(ident(f)?),
                        "u_xyz" => rec.u_xyz = vec3(f)?,
                        "u_rpy" => rec.u_rpy = vec3(f)?,
                        "mask" => mask_f = Some(f),
                        "constants" => consts_f = Some(f),
                        _ => return Err(unknown_key(f, "loop")),
                    }
                }
                rec.a_link = required(a_link, b, "a_link")?;
                rec.u_link = required(u_link, b, "u_link")?;
                let mf = required(mask_f, b, "mask")?;
                for tok in mf.value.split_whitespace() {
                    let Some(k) = MASK_NAMES.iter().position(|&m| m == tok) else {
                        return Err(err(ParseErrorKind::BadMask, (mf.line, mf.col), format!("unknown direction `{tok}`")));
                    };
                    if rec.mask[k] {
                        return Err(err(ParseErrorKind::BadMask, (mf.line, mf.col), format!("direction `{tok}` repeated")));
                    }
                    rec.mask[k] = true;
                }
                let count = rec.mask.iter().filter(|&&x| x).count();
                rec.constants = match consts_f {
                    Some(cf) => {
                        let n = cf.value.split_whitespace().count();
                        if n != count {
                            return Err(err(ParseErrorKind::BadMask, (cf.line, cf.col), format!("{n} constants for {count} masked directions")));
                        }
                        nums(cf, n)?
                    }
                    None => vec![0.0; count],
                };
                doc.loops.push(rec);
            }
            "contact" => {
                let i = doc.contacts.len();
                spans.blocks.insert(("contact", i), at);
                let mut link = None;
                let mut rec = ContactRecord { name, link: String::new(), point: [0.0; 3], normal: [0.0, 0.0, 1.0], mu: 1.0 };
                for f in &b.fields {
                    spans.fields.insert(("contact", i, f.key.clone()), (f.line, f.col));
                    match f.key.as_str() {
                        "link" => link = Some(ident(f)?),
                        "point" => rec.point = vec3(f)?,
                        "normal" => rec.normal = vec3(f)?,
                        "mu" => rec.mu = num(f)?,
                        _ => return Err(unknown_key(f, "contact")),
                    }
                }
                rec.link = required(link, b, "link")?;
                doc.contacts.push(rec);
            }
            "actuator" => {
                let i = doc.actuators.len();
                spans.blocks.insert(("actuator", i), at);
                let (mut joint, mut lead) = (None, None);
                let mut rec = ActuatorRecord { name, joint: String::new(), lead: 0.0, efficiency: 1.0 };
                for f in &b.fields {
                    spans.fields.insert(("actuator", i, f.key.clone()), (f.line, f.col));
                    match f.key.as_str() {
                        "joint" => joint = Some(ident(f)?),
                        "lead" => lead = Some(num(f)?),
                        "efficiency" => rec.efficiency = num(f)?,
                        _ => return Err(unknown_key(f, "actuator")),
                    }
                }
                rec.joint = required(joint, b, "joint")?;
                rec.lead = required(lead, b, "lead")?;
                doc.actuators.push(rec);
            }
            "selection" => {
                if selection_seen {
                    return Err(err(ParseErrorKind::DuplicateName, at, "more than one selection block"));
                }
                selection_seen = true;
                spans.blocks.insert(("selection", 0), at);
                for f in &b.fields {
                    spans.fields.insert(("selection", 0, f.key.clone()), (f.line, f.col));
                    match f.key.as_str() {
                        "dofs" => doc.selection = f.value.split_whitespace().map(str::to_string).collect(),
                        _ => return Err(unknown_key(f, "selection")),
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    validate(&doc, &spans)?;
    Ok(doc)
}

fn check_unique<'a>(names: impl Iterator<Item = &'a String>, kind: &'static str, spans: &Spans) -> Result<(), ParseError> {
    let mut seen = HashSet::new();
    for (i, n) in names.enumerate() {
        if !seen.insert(n.as_str()) {
            return Err(err(ParseErrorKind::DuplicateName, spans.block(kind, i), format!("duplicate {kind} name `{n}`")));
        }
    }
    Ok(())
}

fn validate(doc: &MechanismDocument, spans: &Spans) -> Result<(), ParseError> {
    use ParseErrorKind::*;
    check_unique(doc.links.iter().map(|l| &l.name), "link", spans)?;
    check_unique(doc.joints.iter().map(|l| &l.name), "joint", spans)?;
    check_unique(doc.loops.iter().map(|l| &l.name), "loop", spans)?;
    check_unique(doc.contacts.iter().map(|l| &l.name), "contact", spans)?;
    check_unique(doc.actuators.iter().map(|l| &l.name), "actuator", spans)?;
    if doc.links.is_empty() {
        return Err(err(InvalidModel, (1, 1), "document declares no links"));
    }
    let link_idx: HashMap<&str, usize> = doc.links.iter().enumerate().map(|(i, l)| (l.name.as_str(), i)).collect();
    let link_ref = |name: &str, kind: &'static str, i: usize, key: &str| -> Result<usize, ParseError> {
        link_idx
            .get(name)
            .copied()
            .ok_or_else(|| err(UnknownReference, spans.field(kind, i, key), format!("unknown link `{name}`")))
    };
    for (i, l) in doc.links.iter().enumerate() {
        if !(l.mass >= 0.0) {
            return Err(err(InvalidModel, spans.field("link", i, "mass"), format!("link `{}` has negative mass", l.name)));
        }
        let t = inertia_matrix(&l.inertia);
        let ev = t.symmetric_eigenvalues();
        if ev.iter().any(|&e| e < -1e-12 * (1.0 + t.norm())) {
            return Err(err(InvalidModel, spans.field("link", i, "inertia"), format!("link `{}` inertia is not positive semidefinite", l.name)));
        }
    }
    let mut has_parent = vec![false; doc.links.len()];
    let mut floating = 0;
    for (i, j) in doc.joints.iter().enumerate() {
        let c = link_ref(&j.child, "joint", i, "child")?;
        if let Some(p) = &j.parent {
            let p = link_ref(p, "joint", i, "parent")?;
            if p == c {
                return Err(err(InvalidModel, spans.block("joint", i), format!("joint `{}` connects a link to itself", j.name)));
            }
        }
        if has_parent[c] {
            return Err(err(InvalidModel, spans.field("joint", i, "child"), format!("link `{}` has two parent joints", j.child)));
        }
        has_parent[c] = true;
        if j.kind == JointKind::Floating {
            floating += 1;
            if floating > 1 {
                return Err(err(InvalidModel, spans.block("joint", i), "more than one floating joint"));
            }
        } else {
            let a = Vector3::from(j.axis);
            if a.norm() < 1e-9 {
                return Err(err(InvalidModel, spans.field("joint", i, "axis"), format!("joint `{}` has a zero axis", j.name)));
            }
        }
        if let Some((lo, hi)) = j.limits {
            if lo > hi {
                return Err(err(BadLimits, spans.field("joint", i, "limits"), format!("joint `{}` limits {lo} > {hi}", j.name)));
            }
        }
    }
    let roots: Vec<usize> = (0..doc.links.len()).filter(|&i| !has_parent[i]).collect();
    let floating_child = doc.joints.iter().find(|j| j.kind == JointKind::Floating).map(|j| link_idx[j.child.as_str()]);
    match (roots.len(), floating_child) {
        (0, Some(_)) => {}
        (1, None) => {}
        (0, None) => return Err(err(InvalidModel, (1, 1), "joint graph has no root link")),
        (_, Some(_)) => {
            return Err(err(InvalidModel, spans.block("link", roots[0]), format!("link `{}` is not attached to the tree", doc.links[roots[0]].name)))
        }
        (_, None) => {
            return Err(err(InvalidModel, spans.block("link", roots[1]), format!("link `{}` is not attached to the tree", doc.links[roots[1]].name)))
        }
    }
    // reachability from the root
    let root = floating_child.unwrap_or_else(|| roots[0]);
    let mut reach = vec![false; doc.links.len()];
    reach[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(l) = queue.pop_front() {
        for j in &doc.joints {
            if j.parent.as_deref() == Some(doc.links[l].name.as_str()) {
                let c = link_idx[j.child.as_str()];
                if !reach[c] {
                    reach[c] = true;
                    queue.push_back(c);
                }
            }
        }
    }
    if let Some(i) = reach.iter().position(|&r| !r) {
        return Err(err(InvalidModel, spans.block("link", i), format!("link `{}` is part of a joint cycle", doc.links[i].name)));
    }
    for (i, lp) in doc.loops.iter().enumerate() {
        link_ref(&lp.a_link, "loop", i, "a_link")?;
        link_ref(&lp.u_link, "loop", i, "u_link")?;
        let count = lp.mask.iter().filter(|&&x| x).count();
        if count == 0 {
            return Err(err(BadMask, spans.field("loop", i, "mask"), format!("loop `{}` constrains no direction", lp.name)));
        }
        if lp.constants.len() != count {
            return Err(err(BadMask, spans.field("loop", i, "constants"), format!("loop `{}` has {} constants for {count} directions", lp.name, lp.constants.len())));
        }
    }
    for (i, c) in doc.contacts.iter().enumerate() {
        link_ref(&c.link, "contact", i, "link")?;
        if Vector3::from(c.normal).norm() < 1e-9 {
            return Err(err(InvalidModel, spans.field("contact", i, "normal"), format!("contact `{}` has a zero normal", c.name)));
        }
        if !(c.mu > 0.0) {
            return Err(err(InvalidModel, spans.field("contact", i, "mu"), format!("contact `{}` needs mu > 0", c.name)));
        }
    }
    for (i, a) in doc.actuators.iter().enumerate() {
        let Some(j) = doc.joints.iter().find(|j| j.name == a.joint) else {
            return Err(err(UnknownReference, spans.field("actuator", i, "joint"), format!("unknown joint `{}`", a.joint)));
        };
        if !j.actuated {
            return Err(err(InvalidModel, spans.field("actuator", i, "joint"), format!("joint `{}` is not actuated", a.joint)));
        }
        if !(a.lead > 0.0) || !(a.efficiency > 0.0 && a.efficiency <= 1.0) {
            return Err(err(InvalidModel, spans.block("actuator", i), format!("actuator `{}` needs lead > 0 and 0 < efficiency <= 1", a.name)));
        }
    }
    for s in &doc.selection {
        match doc.joints.iter().find(|j| &j.name == s) {
            None => return Err(err(UnknownReference, spans.field("selection", 0, "dofs"), format!("unknown joint `{s}`"))),
            Some(j) if j.actuated || j.kind == JointKind::Floating => {
                return Err(err(InvalidModel, spans.field("selection", 0, "dofs"), format!("selected joint `{s}` is not a passive DOF")))
            }
            _ => {}
        }
    }
    if doc.selection.iter().collect::<HashSet<_>>().len() != doc.selection.len() {
        return Err(err(DuplicateName, spans.field("selection", 0, "dofs"), "joint selected twice"));
    }
    Ok(())
}

fn inertia_matrix(v: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2])
}

impl MechanismDocument {
    /// Validate a document built in code (errors carry no source location).
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.format != 1 {
            return Err(err(ParseErrorKind::Syntax, (0, 0), format!("unsupported format {}", self.format)));
        }
        validate(self, &Spans::default())
    }

    /// Build the immutable model; DOFs are passive-first in declaration order.
    pub fn to_model(&self) -> Result<MechanismModel, ParseError> {
        self.validate()?;
        let links: Vec<Link> = self
            .links
            .iter()
            .map(|l| Link { name: l.name.clone(), mass: l.mass, com: Vector3::from(l.com), inertia: inertia_matrix(&l.inertia) })
            .collect();
        let li = |n: &str| self.links.iter().position(|l| l.name == n).unwrap();
        let passive: Vec<usize> = (0..self.joints.len())
            .filter(|&i| self.joints[i].kind != JointKind::Floating && !self.joints[i].actuated)
            .collect();
        let active: Vec<usize> = (0..self.joints.len())
            .filter(|&i| self.joints[i].kind != JointKind::Floating && self.joints[i].actuated)
            .collect();
        let mut dof_of = vec![None; self.joints.len()];
        for (d, &j) in passive.iter().chain(active.iter()).enumerate() {
            dof_of[j] = Some(d);
        }
        let joints: Vec<Joint> = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let a = Vector3::from(j.axis);
                Joint {
                    name: j.name.clone(),
                    kind: j.kind,
                    parent: j.parent.as_deref().map(li),
                    child: li(&j.child),
                    origin_rot: rpy_to_matrix(&Vector3::from(j.rpy)),
                    origin_pos: Vector3::from(j.xyz),
                    axis: if j.kind == JointKind::Floating { Vector3::zeros() } else { a / a.norm() },
                    actuated: j.actuated,
                    limits: j.limits,
                    dof: dof_of[i],
                    home: j.home,
                }
            })
            .collect();
        let mut parent_joint = vec![None; links.len()];
        for (i, j) in joints.iter().enumerate() {
            parent_joint[j.child] = Some(i);
        }
        let floating = joints.iter().any(|j| j.kind == JointKind::Floating);
        let root = (0..links.len())
            .find(|&l| match parent_joint[l] {
                None => true,
                Some(j) => joints[j].kind == JointKind::Floating,
            })
            .unwrap();
        let mut order = vec![root];
        let mut k = 0;
        while k < order.len() {
            let l = order[k];
            for j in &joints {
                if j.parent == Some(l) {
                    order.push(j.child);
                }
            }
            k += 1;
        }
        let dof_joint: Vec<usize> = passive.iter().chain(active.iter()).copied().collect();
        let frame = |link: &str, xyz: &[f64; 3], rpy: &[f64; 3]| FrameRef {
            link: li(link),
            rot: rpy_to_matrix(&Vector3::from(*rpy)),
            pos: Vector3::from(*xyz),
        };
        let loops = self
            .loops
            .iter()
            .map(|l| LoopConstraint {
                name: l.name.clone(),
                frame_a: frame(&l.a_link, &l.a_xyz, &l.a_rpy),
                frame_u: frame(&l.u_link, &l.u_xyz, &l.u_rpy),
                mask: l.mask,
                constants: l.constants.clone(),
            })
            .collect();
        let contacts = self
            .contacts
            .iter()
            .map(|c| {
                let n = Vector3::from(c.normal);
                Contact { name: c.name.clone(), link: li(&c.link), point: Vector3::from(c.point), normal: n / n.norm(), mu: c.mu }
            })
            .collect();
        let actuators = self
            .actuators
            .iter()
            .map(|a| {
                let j = self.joints.iter().position(|j| j.name == a.joint).unwrap();
                ActuatorSpec { name: a.name.clone(), dof: dof_of[j].unwrap(), lead: a.lead, efficiency: a.efficiency }
            })
            .collect();
        let selection = self
            .selection
            .iter()
            .map(|s| dof_of[self.joints.iter().position(|j| &j.name == s).unwrap()].unwrap())
            .collect();
        Ok(MechanismModel {
            name: self.name.clone(),
            links,
            joints,
            gravity: Vector3::from(self.gravity),
            floating,
            root,
            order,
            parent_joint,
            dof_joint,
            n: passive.len() + active.len(),
            m: passive.len(),
            loops,
            contacts,
            actuators,
            selection,
        })
    }
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt3(v: &[f64; 3]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ")
}

pub fn serialize_mechanism(doc: &MechanismDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format: {}", doc.format);
    if !doc.name.is_empty() {
        let _ = writeln!(s, "name: {}", doc.name);
    }
    let _ = writeln!(s, "gravity: {}", fmt3(&doc.gravity));
    for l in &doc.links {
        let _ = writeln!(s, "\nlink {} {{", l.name);
        let _ = writeln!(s, "  mass: {}", fmt_f64(l.mass));
        let _ = writeln!(s, "  com: {}", fmt3(&l.com));
        let _ = writeln!(s, "  inertia: {}", l.inertia.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" "));
        s.push_str("}\n");
    }
    for j in &doc.joints {
        let _ = writeln!(s, "\njoint {} {{", j.name);
        let kind = match j.kind {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Floating => "floating",
        };
        let _ = writeln!(s, "  type: {kind}");
        if let Some(p) = &j.parent {
            let _ = writeln!(s, "  parent: {p}");
        }
        let _ = writeln!(s, "  child: {}", j.child);
        let _ = writeln!(s, "  xyz: {}", fmt3(&j.xyz));
        let _ = writeln!(s, "  rpy: {}", fmt3(&j.rpy));
        let _ = writeln!(s, "  axis: {}", fmt3(&j.axis));
        let _ = writeln!(s, "  actuated: {}", j.actuated);
        if let Some((lo, hi)) = j.limits {
            let _ = writeln!(s, "  limits: {} {}", fmt_f64(lo), fmt_f64(hi));
        }
        if j.home != 0.0 {
            let _ = writeln!(s, "  home: {}", fmt_f64(j.home));
        }
        s.push_str("}\n");
    }
    for l in &doc.loops {
        let _ = writeln!(s, "\nloop {} {{", l.name);
        let _ = writeln!(s, "  a_link: {}", l.a_link);
        let _ = writeln!(s, "  a_xyz: {}", fmt3(&l.a_xyz));
        let _ = writeln!(s, "  a_rpy: {}", fmt3(&l.a_rpy));
        let _ = writeln!(s, "  u_link: {}", l.u_link);
        let _ = writeln!(s, "  u_xyz: {}", fmt3(&l.u_xyz));
        let _ = writeln!(s, "  u_rpy: {}", fmt3(&l.u_rpy));
        let mask: Vec<&str> = (0..6).filter(|&k| l.mask[k]).map(|k| MASK_NAMES[k]).collect();
        let _ = writeln!(s, "  mask: {}", mask.join(" "));
        let _ = writeln!(s, "  constants: {}", l.constants.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" "));
        s.push_str("}\n");
    }
    for c in &doc.contacts {
        let _ = writeln!(s, "\ncontact {} {{", c.name);
        let _ = writeln!(s, "  link: {}", c.link);
        let _ = writeln!(s, "  point: {}", fmt3(&c.point));
        let _ = writeln!(s, "  normal: {}", fmt3(&c.normal));
        let _ = writeln!(s, "  mu: {}", fmt_f64(c.mu));
        s.push_str("}\n");
    }
    for a in &doc.actuators {
        let _ = writeln!(s, "\nactuator {} {{", a.name);
        let _ = writeln!(s, "  joint: {}", a.joint);
        let _ = writeln!(s, "  lead: {}", fmt_f64(a.lead));
        let _ = writeln!(s, "  efficiency: {}", fmt_f64(a.efficiency));
        s.push_str("}\n");
    }
    if !doc.selection.is_empty() {
        let _ = writeln!(s, "\nselection {{\n  dofs: {}\n}}", doc.selection.join(" "));
    }
    s
}

/// Parse and build in one step.
pub fn load_model(text: &str) -> Result<MechanismModel, ParseError> {
    parse_mechanism(text)?.to_model()
}
