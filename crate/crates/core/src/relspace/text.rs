//! Fact text format: `relname(v1, v2, ...)` per line, `#` comments, an
//! optional trailing `.` after each fact.

use std::collections::BTreeSet;

use super::{Fact, Value};
use crate::lattices::{LatticeValue, TwoPhaseSet};
use crate::syntax::{Cursor, Pos, SyntaxError, Tok};

pub fn parse_facts(src: &str) -> Result<Vec<Fact>, SyntaxError> {
    let mut cur = Cursor::new(src)?;
    let mut out = Vec::new();
    while !cur.at_eof() {
        out.push(parse_fact(&mut cur)?);
        cur.eat(&Tok::Dot);
    }
    Ok(out)
}

fn parse_fact(cur: &mut Cursor) -> Result<Fact, SyntaxError> {
    let (name, _) = cur.expect_ident()?;
    cur.expect(&Tok::LParen)?;
    let mut args = Vec::new();
    if !cur.eat(&Tok::RParen) {
        loop {
            args.push(parse_value(cur)?);
            if cur.eat(&Tok::RParen) {
                break;
            }
            cur.expect(&Tok::Comma)?;
        }
    }
    Ok(Fact::new(&name, args))
}

/// Parses one ground value. Bare identifiers are symbols.
pub fn parse_value(cur: &mut Cursor) -> Result<Value, SyntaxError> {
    let (tok, pos) = cur.bump();
    match tok {
        Tok::Int(i) => Ok(Value::Int(i)),
        Tok::Text(s) => Ok(Value::text(&s)),
        Tok::QuotedSym(s) => Ok(Value::sym(&s)),
        Tok::Addr(s) => Ok(Value::addr(&s)),
        Tok::Ident(word) => {
            if let Some(l) = parse_lattice(cur, &word, pos)? {
                Ok(Value::lattice(l))
            } else {
                Ok(Value::sym(&word))
            }
        }
        other => Err(SyntaxError::new(pos, format!("expected a value, found {other}"))),
    }
}

/// If `word` (already consumed) opens a lattice literal, parses the rest.
/// Returns `None` when `word` is not a lattice constructor.
pub fn parse_lattice(cur: &mut Cursor, word: &str, pos: Pos) -> Result<Option<LatticeValue>, SyntaxError> {
    let value = match (word, cur.peek()) {
        ("gset", Tok::LBrace) => LatticeValue::GSet(parse_set(cur)?),
        ("maxint", Tok::LParen) => {
            cur.bump();
            let v = match cur.bump() {
                (Tok::Int(i), _) => i,
                (t, p) => return Err(SyntaxError::new(p, format!("expected integer, found {t}"))),
            };
            cur.expect(&Tok::RParen)?;
            LatticeValue::MaxInt(v)
        }
        ("boolor", Tok::LParen) => {
            cur.bump();
            let b = match cur.bump() {
                (Tok::Ident(w), _) if w == "true" => true,
                (Tok::Ident(w), _) if w == "false" => false,
                (t, p) => return Err(SyntaxError::new(p, format!("expected `true` or `false`, found {t}"))),
            };
            cur.expect(&Tok::RParen)?;
            LatticeValue::BoolOr(b)
        }
        ("2p", Tok::LBrace) => {
            cur.bump();
            let mut added = None;
            let mut tomb = None;
            loop {
                let (key, kpos) = cur.expect_ident()?;
                cur.expect(&Tok::Colon)?;
                let set = parse_set(cur)?;
                let slot = match key.as_str() {
                    "added" => &mut added,
                    "tomb" => &mut tomb,
                    _ => return Err(SyntaxError::new(kpos, format!("unknown 2p field `{key}`"))),
                };
                if slot.replace(set).is_some() {
                    return Err(SyntaxError::new(kpos, format!("duplicate 2p field `{key}`")));
                }
                if cur.eat(&Tok::RBrace) {
                    break;
                }
                cur.expect(&Tok::Comma)?;
            }
            LatticeValue::TwoPSet(TwoPhaseSet {
                added: added.unwrap_or_default(),
                tombstoned: tomb.unwrap_or_default(),
            })
        }
        ("2p", _) => return Err(SyntaxError::new(pos, "expected `{` after `2p`")),
        _ => return Ok(None),
    };
    Ok(Some(value))
}

fn parse_set(cur: &mut Cursor) -> Result<BTreeSet<Value>, SyntaxError> {
    cur.expect(&Tok::LBrace)?;
    let mut set = BTreeSet::new();
    if cur.eat(&Tok::RBrace) {
        return Ok(set);
    }
    loop {
        set.insert(parse_value(cur)?);
        if cur.eat(&Tok::RBrace) {
            return Ok(set);
        }
        cur.expect(&Tok::Comma)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fixture_lines() {
        let facts = parse_facts("# waits-for graph\nwaits(T1, T2)\nwaits(T2, T1).\n").unwrap();
        assert_eq!(facts.len(), 2);
        assert_eq!(facts[1], Fact::new("waits", [Value::sym("T2"), Value::sym("T1")]));
    }

    #[test]
    fn parses_lattice_literals() {
        let f = &parse_facts("u(k, 2p{added: {a, b}, tomb: {a}}, gset{}, maxint(-2), boolor(true))").unwrap()[0];
        assert_eq!(
            f.args[1],
            Value::lattice(LatticeValue::TwoPSet(TwoPhaseSet::new(
                [Value::sym("a"), Value::sym("b")],
                [Value::sym("a")]
            )))
        );
        assert_eq!(f.args[2], Value::lattice(LatticeValue::gset([])));
        assert_eq!(f.args[3], Value::lattice(LatticeValue::MaxInt(-2)));
        assert_eq!(f.args[4], Value::lattice(LatticeValue::BoolOr(true)));
    }

    #[test]
    fn bare_lattice_keyword_is_a_symbol() {
        let f = &parse_facts("p(gset, maxint)").unwrap()[0];
        assert_eq!(f.args, vec![Value::sym("gset"), Value::sym("maxint")]);
    }

    #[test]
    fn reports_error_location() {
        let err = parse_facts("p(a)\nq(a b)").unwrap_err();
        assert_eq!(err.pos, Pos::new(2, 5));
    }
}
