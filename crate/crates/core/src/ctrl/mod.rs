// SPDX-License-Identifier: Apache-2.0

//! Rule and chain configuration: the rules-file loader and the line
//! protocol used on the control channel.
//!
//! Rules file (UTF-8, `#` starts a comment):
//!
//! ```text
//! rule <id> prio=<int> [teid=..] [qfi=..] [slice=..] [src=<ipv6>[/len]] [dst=..] [proto=..] [sport=..] [dport=..] chain=<name>
//! chain <name> = <sid>,<sid>,...
//! slice-map teid=<u32> slice=<u16>
//! ```
//!
//! Control commands use the same field syntax:
//!
//! ```text
//! ADD-RULE id=<id> prio=<int> [fields...] chain=<name>
//! DEL-RULE id=<id>
//! ADD-CHAIN <name> = <sid>,<sid>,...
//! SLICE-MAP teid=<u32> slice=<u16>
//! LIST-RULES | STATS | PING | STEP <n>
//! ```

mod channel;

use std::fmt;
use std::net::Ipv6Addr;

pub use channel::{request, Connection, Endpoint, Listener, ReadLine, Stream};

use crate::classifier::{AddrMatch, ChainPolicy, ClassifierError, FieldMatch, RuleId, RuleMatch, RuleTable};
use crate::pipeline::{Counters, PipelineState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("SyntaxError at column {position}: expected {expected}")]
pub struct SyntaxError {
    /// 1-based character column.
    pub position: usize,
    pub expected: String,
}

impl SyntaxError {
    fn new(position: usize, expected: impl Into<String>) -> Self {
        SyntaxError { position, expected: expected.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CtrlError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("DuplicateRuleId: {0}")]
    DuplicateRuleId(RuleId),
    #[error("UnknownRuleId: {0}")]
    UnknownRuleId(RuleId),
    #[error("UnknownChain: {0}")]
    UnknownChain(String),
    #[error("InvalidChain: {0}")]
    InvalidChain(&'static str),
    #[error("NotStepping: STEP is only accepted while a run is waiting for steps")]
    NotStepping,
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<CtrlError> },
}

impl From<ClassifierError> for CtrlError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::DuplicateRuleId(id) => CtrlError::DuplicateRuleId(id),
            ClassifierError::UnknownRuleId(id) => CtrlError::UnknownRuleId(id),
            ClassifierError::UnknownChain(name) => CtrlError::UnknownChain(name),
            ClassifierError::InvalidChain(why) => CtrlError::InvalidChain(why),
            ClassifierError::NotGtpTraffic => unreachable!("not produced by table operations"),
        }
    }
}

/// A rule as written in configuration, before its chain is resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSpec {
    pub id: RuleId,
    pub priority: i32,
    pub matcher: RuleMatch,
    pub chain: String,
}

impl fmt::Display for RuleSpec {
    /// Rules-file form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {} prio={}", self.id, self.priority)?;
        let fields = self.matcher.to_string();
        if !fields.is_empty() {
            write!(f, " {fields}")?;
        }
        write!(f, " chain={}", self.chain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlCommand {
    AddRule(RuleSpec),
    DelRule(RuleId),
    AddChain { name: String, sids: Vec<Ipv6Addr> },
    SliceMap { teid: u32, slice: u16 },
    ListRules,
    Stats,
    Ping,
    /// Advance a stepped run by this many scenario steps.
    Step(u32),
}

fn write_sids(f: &mut fmt::Formatter<'_>, sids: &[Ipv6Addr]) -> fmt::Result {
    for (i, sid) in sids.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{sid}")?;
    }
    Ok(())
}

impl fmt::Display for ControlCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlCommand::AddRule(r) => {
                write!(f, "ADD-RULE id={} prio={}", r.id, r.priority)?;
                let fields = r.matcher.to_string();
                if !fields.is_empty() {
                    write!(f, " {fields}")?;
                }
                write!(f, " chain={}", r.chain)
            }
            ControlCommand::DelRule(id) => write!(f, "DEL-RULE id={id}"),
            ControlCommand::AddChain { name, sids } => {
                write!(f, "ADD-CHAIN {name} = ")?;
                write_sids(f, sids)
            }
            ControlCommand::SliceMap { teid, slice } => write!(f, "SLICE-MAP teid={teid} slice={slice}"),
            ControlCommand::ListRules => f.write_str("LIST-RULES"),
            ControlCommand::Stats => f.write_str("STATS"),
            ControlCommand::Ping => f.write_str("PING"),
            ControlCommand::Step(n) => write!(f, "STEP {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlResponse {
    Ok(Vec<String>),
    Err(String),
}

impl ControlResponse {
    pub fn is_ok(&self) -> bool {
        matches!(self, ControlResponse::Ok(_))
    }

    /// `OK` or `ERR <reason>`, then body lines, then an empty line.
    pub fn to_wire(&self) -> String {
        let mut out = String::new();
        match self {
            ControlResponse::Ok(body) => {
                out.push_str("OK\n");
                for line in body {
                    out.push_str(line);
                    out.push('\n');
                }
            }
            ControlResponse::Err(reason) => {
                out.push_str("ERR ");
                out.push_str(reason);
                out.push('\n');
            }
        }
        out.push('\n');
        out
    }
}

impl From<Result<Vec<String>, CtrlError>> for ControlResponse {
    fn from(r: Result<Vec<String>, CtrlError>) -> Self {
        match r {
            Ok(body) => ControlResponse::Ok(body),
            Err(e) => ControlResponse::Err(e.to_string()),
        }
    }
}

/// Whitespace-separated token with its 1-based starting column.
#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (col, (i, ch)) in line.char_indices().enumerate() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some((i, col + 1)),
            (true, Some((s, c))) => {
                out.push(Token { text: &line[s..i], col: c });
                start = None;
            }
            _ => {}
        }
    }
    if let Some((s, c)) = start {
        out.push(Token { text: &line[s..], col: c });
    }
    out
}

fn end_col(line: &str) -> usize {
    line.chars().count() + 1
}

fn parse_num<T: std::str::FromStr>(tok: Token<'_>, value: &str, at: usize, what: &str) -> Result<T, SyntaxError> {
    value.parse().map_err(|_| SyntaxError::new(tok.col + at, what))
}

fn split_kv(tok: Token<'_>) -> Result<(&str, &str, usize), SyntaxError> {
    match tok.text.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k, v, k.len() + 1)),
        _ => Err(SyntaxError::new(tok.col, "key=value")),
    }
}

fn parse_addr_match(tok: Token<'_>, value: &str, at: usize) -> Result<AddrMatch, SyntaxError> {
    match value.split_once('/') {
        None => Ok(AddrMatch::Exact(parse_num(tok, value, at, "IPv6 address")?)),
        Some((addr, len)) => {
            let addr = parse_num(tok, addr, at, "IPv6 address")?;
            let len: u8 = parse_num(tok, len, at + value.find('/').unwrap_or(0) + 1, "prefix length 0..128")?;
            if len > 128 {
                return Err(SyntaxError::new(tok.col + at, "prefix length 0..128"));
            }
            Ok(AddrMatch::Prefix(addr, len))
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Parses the key=value tokens of a rule. `id` is supplied when it was
/// given positionally.
fn parse_rule_fields(tokens: &[Token<'_>], mut id: Option<RuleId>, line: &str) -> Result<RuleSpec, SyntaxError> {
    let mut priority = None;
    let mut chain = None;
    let mut m = RuleMatch::default();
    let mut seen: Vec<&str> = Vec::new();
    for &tok in tokens {
        let (key, value, at) = split_kv(tok)?;
        if seen.contains(&key) {
            return Err(SyntaxError::new(tok.col, format!("no repeated `{key}`")));
        }
        seen.push(key);
        match key {
            "id" if id.is_none() => {
                let v: RuleId = parse_num(tok, value, at, "rule id (positive integer)")?;
                if v == 0 {
                    return Err(SyntaxError::new(tok.col + at, "rule id (positive integer)"));
                }
                id = Some(v);
            }
            "prio" => priority = Some(parse_num(tok, value, at, "integer priority")?),
            "teid" => m.teid = FieldMatch::Exact(parse_num(tok, value, at, "32-bit TEID")?),
            "qfi" => {
                let q: u8 = parse_num(tok, value, at, "QFI 0..63")?;
                if q > 63 {
                    return Err(SyntaxError::new(tok.col + at, "QFI 0..63"));
                }
                m.qfi = FieldMatch::Exact(q);
            }
            "slice" => m.slice = FieldMatch::Exact(parse_num(tok, value, at, "16-bit slice id")?),
            "src" => m.src = parse_addr_match(tok, value, at)?,
            "dst" => m.dst = parse_addr_match(tok, value, at)?,
            "proto" => m.proto = FieldMatch::Exact(parse_num(tok, value, at, "protocol number 0..255")?),
            "sport" => m.sport = FieldMatch::Exact(parse_num(tok, value, at, "port 0..65535")?),
            "dport" => m.dport = FieldMatch::Exact(parse_num(tok, value, at, "port 0..65535")?),
            "chain" => {
                if !valid_name(value) {
                    return Err(SyntaxError::new(tok.col + at, "chain name"));
                }
                chain = Some(value.to_owned());
            }
            _ => {
                return Err(SyntaxError::new(
                    tok.col,
                    "one of id, prio, teid, qfi, slice, src, dst, proto, sport, dport, chain",
                ))
            }
        }
    }
    let end = end_col(line);
    Ok(RuleSpec {
        id: id.ok_or_else(|| SyntaxError::new(end, "id=<positive integer>"))?,
        priority: priority.ok_or_else(|| SyntaxError::new(end, "prio=<int>"))?,
        matcher: m,
        chain: chain.ok_or_else(|| SyntaxError::new(end, "chain=<name>"))?,
    })
}

/// Parses `<name> = <sid>,<sid>` starting at byte offset `from` of `line`.
fn parse_chain_def(line: &str, from: usize) -> Result<(String, Vec<Ipv6Addr>), SyntaxError> {
    let col_of = |byte: usize| line[..byte].chars().count() + 1;
    let rest = &line[from..];
    let Some(eq) = rest.find('=') else {
        return Err(SyntaxError::new(end_col(line), "`<name> = <sid>,...`"));
    };
    let name = rest[..eq].trim();
    if !valid_name(name) {
        return Err(SyntaxError::new(col_of(from), "chain name"));
    }
    let mut sids = Vec::new();
    let mut at = from + eq + 1;
    for part in line[at..].split(',') {
        let trimmed = part.trim();
        let lead = part.len() - part.trim_start().len();
        let sid = trimmed.parse().map_err(|_| SyntaxError::new(col_of(at + lead), "IPv6 SID"))?;
        sids.push(sid);
        at += part.len() + 1;
    }
    Ok((name.to_owned(), sids))
}

fn parse_slice_map(tokens: &[Token<'_>], line: &str) -> Result<(u32, u16), SyntaxError> {
    let mut teid = None;
    let mut slice = None;
    for &tok in tokens {
        let (key, value, at) = split_kv(tok)?;
        match key {
            "teid" if teid.is_none() => teid = Some(parse_num(tok, value, at, "32-bit TEID")?),
            "slice" if slice.is_none() => slice = Some(parse_num(tok, value, at, "16-bit slice id")?),
            _ => return Err(SyntaxError::new(tok.col, "teid=<u32> or slice=<u16>")),
        }
    }
    let end = end_col(line);
    Ok((
        teid.ok_or_else(|| SyntaxError::new(end, "teid=<u32>"))?,
        slice.ok_or_else(|| SyntaxError::new(end, "slice=<u16>"))?,
    ))
}

fn no_args(tokens: &[Token<'_>]) -> Result<(), SyntaxError> {
    match tokens.first() {
        Some(t) => Err(SyntaxError::new(t.col, "end of line")),
        None => Ok(()),
    }
}

/// Parses one control-channel command line.
pub fn parse_command(line: &str) -> Result<ControlCommand, SyntaxError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let tokens = tokenize(line);
    let Some(&head) = tokens.first() else {
        return Err(SyntaxError::new(1, "a command"));
    };
    let args = &tokens[1..];
    match head.text {
        "ADD-RULE" => parse_rule_fields(args, None, line).map(ControlCommand::AddRule),
        "DEL-RULE" => {
            let [tok] = args else {
                return Err(SyntaxError::new(args.get(1).map_or(end_col(line), |t| t.col), "id=<positive integer>"));
            };
            match split_kv(*tok)? {
                ("id", v, at) => match v.parse::<RuleId>() {
                    Ok(id) if id > 0 => Ok(ControlCommand::DelRule(id)),
                    _ => Err(SyntaxError::new(tok.col + at, "rule id (positive integer)")),
                },
                _ => Err(SyntaxError::new(tok.col, "id=<positive integer>")),
            }
        }
        "ADD-CHAIN" => {
            let from = line.char_indices().nth(head.col - 1 + head.text.chars().count()).map_or(line.len(), |(i, _)| i);
            let (name, sids) = parse_chain_def(line, from)?;
            Ok(ControlCommand::AddChain { name, sids })
        }
        "SLICE-MAP" => parse_slice_map(args, line).map(|(teid, slice)| ControlCommand::SliceMap { teid, slice }),
        "LIST-RULES" => no_args(args).map(|_| ControlCommand::ListRules),
        "STATS" => no_args(args).map(|_| ControlCommand::Stats),
        "PING" => no_args(args).map(|_| ControlCommand::Ping),
        "STEP" => match args {
            [] => Ok(ControlCommand::Step(1)),
            [tok] => tok.text.parse().map(ControlCommand::Step).map_err(|_| SyntaxError::new(tok.col, "step count")),
            [_, extra, ..] => Err(SyntaxError::new(extra.col, "end of line")),
        },
        _ => Err(SyntaxError::new(
            head.col,
            "one of ADD-RULE, DEL-RULE, ADD-CHAIN, SLICE-MAP, LIST-RULES, STATS, PING, STEP",
        )),
    }
}

fn apply_to(cmd: &ControlCommand, table: &mut RuleTable, counters: &mut Counters) -> Result<Vec<String>, CtrlError> {
    match cmd {
        ControlCommand::AddRule(spec) => {
            table.add_rule_for_chain(spec.id, spec.priority, spec.matcher, &spec.chain)?;
            Ok(Vec::new())
        }
        ControlCommand::DelRule(id) => {
            table.remove_rule(*id)?;
            counters.forget_rule(*id);
            Ok(Vec::new())
        }
        ControlCommand::AddChain { name, sids } => {
            table.define_chain(ChainPolicy::new(name.clone(), sids.clone())?);
            Ok(Vec::new())
        }
        ControlCommand::SliceMap { teid, slice } => {
            table.map_slice(*teid, *slice);
            Ok(Vec::new())
        }
        ControlCommand::ListRules => {
            let mut rules: Vec<_> = table.rules().iter().collect();
            rules.sort_by_key(|r| r.id);
            Ok(rules
                .into_iter()
                .map(|r| {
                    RuleSpec { id: r.id, priority: r.priority, matcher: r.matcher, chain: r.action.name().to_owned() }
                        .to_string()
                })
                .collect())
        }
        ControlCommand::Stats => Ok(counters.entries().into_iter().map(|(k, v)| format!("{k}={v}")).collect()),
        ControlCommand::Ping => Ok(Vec::new()),
        ControlCommand::Step(_) => Err(CtrlError::NotStepping),
    }
}

/// Applies one command. Failed commands leave the state untouched.
pub fn apply(cmd: &ControlCommand, state: &mut PipelineState) -> ControlResponse {
    apply_to(cmd, &mut state.table, &mut state.counters).into()
}

/// Parsed contents of a rules file, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RulesConfig {
    pub chains: Vec<(String, Vec<Ipv6Addr>)>,
    pub rules: Vec<RuleSpec>,
    pub slice_maps: Vec<(u32, u16)>,
    /// Non-chain commands in file order.
    ordered: Vec<ControlCommand>,
}

impl RulesConfig {
    /// The equivalent command sequence: every chain definition first, then
    /// the remaining declarations in file order.
    pub fn commands(&self) -> Vec<ControlCommand> {
        self.chains
            .iter()
            .map(|(name, sids)| ControlCommand::AddChain { name: name.clone(), sids: sids.clone() })
            .chain(self.ordered.iter().cloned())
            .collect()
    }

    pub fn build_table(&self) -> Result<RuleTable, CtrlError> {
        let mut table = RuleTable::new();
        let mut counters = Counters::default();
        for cmd in self.commands() {
            apply_to(&cmd, &mut table, &mut counters)?;
        }
        Ok(table)
    }
}

fn at_line(line: usize) -> impl Fn(CtrlError) -> CtrlError {
    move |e| CtrlError::AtLine { line, source: Box::new(e) }
}

/// Loads a rules file. Chains may be declared after the rules that use them.
pub fn load_rules_file(text: &str) -> Result<RulesConfig, CtrlError> {
    let mut cfg = RulesConfig::default();
    let mut rule_lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or_default();
        let tokens = tokenize(line);
        let Some(&head) = tokens.first() else { continue };
        let wrap = at_line(lineno);
        match head.text {
            "rule" => {
                let Some(&id_tok) = tokens.get(1) else {
                    return Err(wrap(SyntaxError::new(end_col(line), "rule id").into()));
                };
                let id = match id_tok.text.parse::<RuleId>() {
                    Ok(id) if id > 0 => id,
                    _ => return Err(wrap(SyntaxError::new(id_tok.col, "rule id (positive integer)").into())),
                };
                let spec = parse_rule_fields(&tokens[2..], Some(id), line).map_err(|e| wrap(e.into()))?;
                if cfg.rules.iter().any(|r| r.id == spec.id) {
                    return Err(wrap(CtrlError::DuplicateRuleId(spec.id)));
                }
                rule_lines.push(lineno);
                cfg.ordered.push(ControlCommand::AddRule(spec.clone()));
                cfg.rules.push(spec);
            }
            "chain" => {
                let from = line.char_indices().nth(head.col - 1 + 5).map_or(line.len(), |(i, _)| i);
                let (name, sids) = parse_chain_def(line, from).map_err(|e| wrap(e.into()))?;
                ChainPolicy::new(name.clone(), sids.clone()).map_err(|e| wrap(e.into()))?;
                cfg.chains.push((name, sids));
            }
            "slice-map" => {
                let (teid, slice) = parse_slice_map(&tokens[1..], line).map_err(|e| wrap(e.into()))?;
                cfg.ordered.push(ControlCommand::SliceMap { teid, slice });
                cfg.slice_maps.push((teid, slice));
            }
            _ => return Err(wrap(SyntaxError::new(head.col, "one of rule, chain, slice-map").into())),
        }
    }
    for (spec, line) in cfg.rules.iter().zip(rule_lines) {
        if !cfg.chains.iter().any(|(name, _)| *name == spec.chain) {
            return Err(at_line(line)(CtrlError::UnknownChain(spec.chain.clone())));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srv6::EncapConfig;

    fn a(s: &str) -> Ipv6Addr {
        s.parse().unwrap()
    }

    fn state() -> PipelineState {
        PipelineState::new(RuleTable::new(), EncapConfig::new(a("fd00:e::1"), a("fd00:e::100")))
    }

    pub(crate) const POC_RULES: &str = "\
# chains through the network functions
rule 1 prio=10 qfi=1 chain=dash-chain
rule 2 prio=10 proto=58 chain=icmp-chain
chain dash-chain = fd00:a::1,fd00:b::1
chain icmp-chain = fd00:a::1,fd00:c::1
";

    #[test]
    fn parses_add_rule() {
        let cmd = parse_command("ADD-RULE id=7 prio=10 qfi=1 chain=dash-chain").unwrap();
        assert_eq!(
            cmd,
            ControlCommand::AddRule(RuleSpec {
                id: 7,
                priority: 10,
                matcher: RuleMatch { qfi: FieldMatch::Exact(1), ..Default::default() },
                chain: "dash-chain".into(),
            })
        );
    }

    #[test]
    fn parses_add_chain() {
        assert_eq!(
            parse_command("ADD-CHAIN dash-chain = fd00:a::1,fd00:b::1").unwrap(),
            ControlCommand::AddChain { name: "dash-chain".into(), sids: vec![a("fd00:a::1"), a("fd00:b::1")] }
        );
        assert_eq!(
            parse_command("ADD-CHAIN c=fd00:a::1").unwrap(),
            ControlCommand::AddChain { name: "c".into(), sids: vec![a("fd00:a::1")] }
        );
    }

    #[test]
    fn malformed_arguments_are_syntax_errors() {
        let e = parse_command("DEL-RULE id=nope").unwrap_err();
        assert_eq!(e.position, 13);
        assert!(parse_command("DEL-RULE id=0").is_err());
        assert!(parse_command("DEL-RULE").is_err());
        assert!(parse_command("ADD-RULE id=1 prio=1 qfi=64 chain=x").is_err());
        assert!(parse_command("ADD-RULE id=1 prio=1 qfi=1").is_err());
        assert!(parse_command("ADD-RULE id=1 prio=1 qfi=1 qfi=2 chain=x").is_err());
        assert!(parse_command("ADD-RULE id=1 prio=1 src=fd00::/129 chain=x").is_err());
        assert!(parse_command("ADD-RULE id=1 prio=1 bogus=3 chain=x").is_err());
        assert!(parse_command("ADD-CHAIN x = fd00::1,,fd00::2").is_err());
        assert!(parse_command("PING now").is_err());
        assert!(parse_command("add-rule id=1").is_err());
        assert!(parse_command("").is_err());
        let e = parse_command("ADD-CHAIN x = fd00::1, zz").unwrap_err();
        assert_eq!(e.position, 24);
    }

    #[test]
    fn step_defaults_to_one() {
        assert_eq!(parse_command("STEP").unwrap(), ControlCommand::Step(1));
        assert_eq!(parse_command("STEP 4").unwrap(), ControlCommand::Step(4));
        assert!(parse_command("STEP x").is_err());
        assert_eq!(apply(&ControlCommand::Step(1), &mut state()), ControlResponse::Err(CtrlError::NotStepping.to_string()));
    }

    #[test]
    fn chain_then_rule_happy_path() {
        let mut s = state();
        assert!(apply(&parse_command("ADD-CHAIN dash = fd00:a::1,fd00:b::1").unwrap(), &mut s).is_ok());
        assert!(apply(&parse_command("ADD-RULE id=1 prio=5 qfi=1 chain=dash").unwrap(), &mut s).is_ok());
        assert_eq!(s.table.get(1).unwrap().action.segments(), &[a("fd00:a::1"), a("fd00:b::1")]);
        let list = apply(&ControlCommand::ListRules, &mut s);
        assert_eq!(list, ControlResponse::Ok(vec!["rule 1 prio=5 qfi=1 chain=dash".into()]));
    }

    #[test]
    fn unknown_chain_is_rejected_without_change() {
        let mut s = state();
        let before = s.table.clone();
        let r = apply(&parse_command("ADD-RULE id=1 prio=5 chain=ghost").unwrap(), &mut s);
        assert_eq!(r, ControlResponse::Err("UnknownChain: ghost".into()));
        assert_eq!(s.table, before);
    }

    #[test]
    fn del_unknown_rule_errs() {
        let mut s = state();
        assert_eq!(apply(&ControlCommand::DelRule(99), &mut s), ControlResponse::Err("UnknownRuleId: 99".into()));
    }

    #[test]
    fn wire_format() {
        assert_eq!(ControlResponse::Ok(vec![]).to_wire(), "OK\n\n");
        assert_eq!(ControlResponse::Ok(vec!["a=1".into()]).to_wire(), "OK\na=1\n\n");
        assert_eq!(ControlResponse::Err("UnknownRuleId: 9".into()).to_wire(), "ERR UnknownRuleId: 9\n\n");
    }

    #[test]
    fn loads_poc_rules_with_forward_chain_references() {
        let cfg = load_rules_file(POC_RULES).unwrap();
        assert_eq!(cfg.chains.len(), 2);
        assert_eq!(cfg.rules.len(), 2);
        let table = cfg.build_table().unwrap();
        assert_eq!(table.get(2).unwrap().action.name(), "icmp-chain");
    }

    #[test]
    fn empty_file_is_empty_config() {
        let cfg = load_rules_file("").unwrap();
        assert_eq!(cfg, RulesConfig::default());
        assert!(cfg.build_table().unwrap().is_empty());
        assert!(load_rules_file("# only a comment\n\n   \n").unwrap().rules.is_empty());
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let e = load_rules_file("chain c = fd00::1\nrule 1 prio=x chain=c\n").unwrap_err();
        assert!(matches!(e, CtrlError::AtLine { line: 2, .. }), "{e}");
        let e = load_rules_file("rule 1 prio=1 chain=c\n").unwrap_err();
        assert_eq!(e.to_string(), "line 1: UnknownChain: c");
        let e = load_rules_file("chain c = fd00::1\nrule 1 prio=1 chain=c\nrule 1 prio=2 chain=c\n").unwrap_err();
        assert_eq!(e.to_string(), "line 3: DuplicateRuleId: 1");
        let e = load_rules_file("frobnicate\n").unwrap_err();
        assert!(matches!(e, CtrlError::AtLine { line: 1, .. }));
    }

    #[test]
    fn slice_map_lines() {
        let cfg = load_rules_file("slice-map teid=100 slice=7\n").unwrap();
        assert_eq!(cfg.slice_maps, vec![(100, 7)]);
        assert_eq!(cfg.build_table().unwrap().teid_to_slice().get(&100), Some(&7));
        assert_eq!(
            parse_command("SLICE-MAP teid=100 slice=7").unwrap(),
            ControlCommand::SliceMap { teid: 100, slice: 7 }
        );
    }

    #[test]
    fn file_matches_command_replay() {
        let cfg = load_rules_file(POC_RULES).unwrap();
        let mut s = state();
        for cmd in cfg.commands() {
            let line = cmd.to_string();
            assert!(apply(&parse_command(&line).unwrap(), &mut s).is_ok(), "{line}");
        }
        assert_eq!(s.table, cfg.build_table().unwrap());
    }
}
