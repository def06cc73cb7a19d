use std::collections::HashMap;

use super::*;
use crate::relspace::{parse_lattice, Value};
use crate::syntax::{Cursor, SyntaxError, Tok};

const DECL_WORDS: [&str; 5] = ["input", "output", "table", "event", "channel"];

/// Parses `.calm` source text. Declarations and rules may appear in any
/// order; a relation may be declared only once.
pub fn parse_program(src: &str) -> Result<Program, SyntaxError> {
    let mut cur = Cursor::new(src)?;
    let mut program = Program::default();
    let mut declared: HashMap<String, Pos> = HashMap::new();
    while !cur.at_eof() {
        if is_decl_start(&cur) {
            let decl = parse_decl(&mut cur)?;
            if let Some(first) = declared.insert(decl.name.clone(), decl.pos) {
                return Err(SyntaxError::new(
                    decl.pos,
                    format!("duplicate declaration of `{}` (first declared at {first})", decl.name),
                ));
            }
            program.decls.push(decl);
        } else {
            program.rules.push(parse_rule(&mut cur)?);
        }
    }
    Ok(program)
}

fn is_decl_start(cur: &Cursor) -> bool {
    matches!(cur.peek(), Tok::Ident(w) if DECL_WORDS.contains(&w.as_str())) && matches!(cur.peek_at(1), Tok::Ident(_))
}

fn parse_decl(cur: &mut Cursor) -> Result<RelDecl, SyntaxError> {
    let start = cur.pos();
    let (mut input, mut output) = (false, false);
    let kind = loop {
        let (word, pos) = cur.expect_ident()?;
        match word.as_str() {
            "input" if !input => input = true,
            "output" if !output => output = true,
            "table" => break RelKind::Table,
            "event" => break RelKind::Event,
            "channel" => break RelKind::Channel,
            _ => return Err(SyntaxError::new(pos, format!("unexpected `{word}` in declaration"))),
        }
    };
    let (name, _) = cur.expect_ident()?;
    cur.expect(&Tok::LParen)?;
    let mut columns = Vec::new();
    if !cur.eat(&Tok::RParen) {
        loop {
            let (first, pos) = cur.expect_ident()?;
            let (col_name, ty_word, ty_pos) = if cur.eat(&Tok::Colon) {
                let (ty, tp) = cur.expect_ident()?;
                (Some(first), ty, tp)
            } else {
                (None, first, pos)
            };
            let ty = ColType::from_keyword(&ty_word)
                .ok_or_else(|| SyntaxError::new(ty_pos, format!("unknown column type `{ty_word}`")))?;
            columns.push(Column { name: col_name, ty });
            if cur.eat(&Tok::RParen) {
                break;
            }
            cur.expect(&Tok::Comma)?;
        }
    }
    cur.expect(&Tok::Dot)?;
    Ok(RelDecl { name, columns, kind, input, output, pos: start })
}

fn is_var_name(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase() || c == '_')
}

fn parse_rule(cur: &mut Cursor) -> Result<Rule, SyntaxError> {
    let pos = cur.pos();
    let head = parse_head(cur)?;
    let mut body = Vec::new();
    if cur.eat(&Tok::Turnstile) {
        loop {
            body.push(parse_body_elem(cur)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
    }
    cur.expect(&Tok::Dot)?;
    Ok(Rule { head, body, pos })
}

fn parse_head(cur: &mut Cursor) -> Result<Head, SyntaxError> {
    let (relation, pos) = cur.expect_ident()?;
    cur.expect(&Tok::LParen)?;
    let mut terms = Vec::new();
    if !cur.eat(&Tok::RParen) {
        loop {
            terms.push(parse_head_term(cur)?);
            if cur.eat(&Tok::RParen) {
                break;
            }
            cur.expect(&Tok::Comma)?;
        }
    }
    Ok(Head { relation, terms, pos })
}

fn parse_head_term(cur: &mut Cursor) -> Result<HeadTerm, SyntaxError> {
    if cur.eat(&Tok::Star) {
        return Ok(HeadTerm::Broadcast);
    }
    if let (Tok::Ident(w), Tok::Lt) = (cur.peek(), cur.peek_at(1)) {
        let func = match w.as_str() {
            "count" => Some(AggFunc::Count),
            "min" => Some(AggFunc::Min),
            "max" => Some(AggFunc::Max),
            _ => None,
        };
        if let Some(func) = func {
            let pos = cur.pos();
            cur.bump();
            cur.bump();
            let (var, vpos) = cur.expect_ident()?;
            if !is_var_name(&var) {
                return Err(SyntaxError::new(vpos, format!("aggregate argument `{var}` must be a variable")));
            }
            cur.expect(&Tok::Gt)?;
            return Ok(HeadTerm::Aggregate { func, var, pos });
        }
    }
    Ok(HeadTerm::Term(parse_term(cur)?))
}

fn parse_term(cur: &mut Cursor) -> Result<Term, SyntaxError> {
    let (tok, pos) = cur.bump();
    Ok(match tok {
        Tok::Underscore => Term::Wildcard,
        Tok::Int(i) => Term::Const(Value::Int(i)),
        Tok::Text(s) => Term::Const(Value::text(&s)),
        Tok::QuotedSym(s) => Term::Const(Value::sym(&s)),
        Tok::Addr(s) => Term::Const(Value::addr(&s)),
        Tok::Ident(w) if is_var_name(&w) => Term::Var(w),
        Tok::Ident(w) => match parse_lattice(cur, &w, pos)? {
            Some(l) => Term::Const(Value::lattice(l)),
            None => Term::Const(Value::sym(&w)),
        },
        other => return Err(SyntaxError::new(pos, format!("expected a term, found {other}"))),
    })
}

fn parse_atom(cur: &mut Cursor) -> Result<Atom, SyntaxError> {
    let (relation, pos) = cur.expect_ident()?;
    cur.expect(&Tok::LParen)?;
    let mut terms = Vec::new();
    if !cur.eat(&Tok::RParen) {
        loop {
            terms.push(parse_term(cur)?);
            if cur.eat(&Tok::RParen) {
                break;
            }
            cur.expect(&Tok::Comma)?;
        }
    }
    Ok(Atom { relation, terms, pos })
}

fn parse_body_elem(cur: &mut Cursor) -> Result<BodyElem, SyntaxError> {
    if let Tok::Bang = cur.peek() {
        let pos = cur.bump().1;
        return Ok(BodyElem::Neg { atom: parse_atom(cur)?, pos });
    }
    if let (Tok::Ident(_), Tok::LParen) = (cur.peek(), cur.peek_at(1)) {
        return Ok(BodyElem::Pos(parse_atom(cur)?));
    }
    let pos = cur.pos();
    let lhs = parse_term(cur)?;
    let (op_tok, op_pos) = cur.bump();
    let (op, swap) = match op_tok {
        Tok::Eq => (CmpOp::Eq, false),
        Tok::Ne => (CmpOp::Ne, false),
        Tok::Lt => (CmpOp::Lt, false),
        Tok::Le => (CmpOp::Le, false),
        Tok::Gt => (CmpOp::Lt, true),
        Tok::Ge => (CmpOp::Le, true),
        other => return Err(SyntaxError::new(op_pos, format!("expected a comparison operator, found {other}"))),
    };
    let rhs = parse_term(cur)?;
    let (lhs, rhs) = if swap { (rhs, lhs) } else { (lhs, rhs) };
    Ok(BodyElem::Cmp { op, lhs, rhs, pos })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_rule() {
        let p = parse_program("path(X,Y) :- edge(X,Y).").unwrap();
        assert_eq!(p.rules.len(), 1);
        assert_eq!(p.rules[0].negation_count(), 0);
        assert_eq!(p.rules[0].pos, Pos::new(1, 1));
    }

    #[test]
    fn negated_literal() {
        let p = parse_program("garbage(X) :- object(X), !reach(X).").unwrap();
        assert_eq!(p.rules[0].negation_count(), 1);
        let (atom, pos) = p.rules[0].negatives().next().unwrap();
        assert_eq!(atom.relation, "reach");
        assert_eq!(pos, Pos::new(1, 26));
    }

    #[test]
    fn declarations_and_heads() {
        let p = parse_program(
            "input output table t(a: sym, int).\nchannel c(addr, sym).\nc(*, X) :- t(X, _).\nn(count<X>) :- t(X, _).",
        )
        .unwrap();
        assert!(p.decls[0].input && p.decls[0].output);
        assert_eq!(p.decls[0].columns[0].name.as_deref(), Some("a"));
        assert_eq!(p.decls[1].kind, RelKind::Channel);
        assert_eq!(p.rules[0].head.terms[0], HeadTerm::Broadcast);
        assert!(p.rules[1].head.has_aggregate());
    }

    #[test]
    fn greater_than_is_normalized() {
        let p = parse_program("p(X) :- q(X, Y), X > Y.").unwrap();
        assert_eq!(
            p.rules[0].body[1],
            BodyElem::Cmp {
                op: CmpOp::Lt,
                lhs: Term::Var("Y".into()),
                rhs: Term::Var("X".into()),
                pos: Pos::new(1, 18)
            }
        );
    }

    #[test]
    fn duplicate_declaration_is_an_error() {
        let err = parse_program("table t(sym).\nevent t(int).").unwrap_err();
        assert_eq!(err.pos, Pos::new(2, 1));
        assert!(err.message.contains("duplicate"));
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_program("p(X) :- q(X)\nr(X) :- q(X).").unwrap_err();
        assert_eq!(err.pos, Pos::new(2, 1));
    }

    #[test]
    fn relation_named_like_a_keyword() {
        let p = parse_program("table(X) :- event(X).").unwrap();
        assert_eq!(p.rules[0].head.relation, "table");
    }

    #[test]
    fn constants_print_back() {
        let src = "p('T1', a, 3, \"s\", @m1) :- q('Upper', _).";
        let p = parse_program(src).unwrap();
        let again = parse_program(&p.to_string()).unwrap();
        assert_eq!(again.without_positions(), p.without_positions());
    }
}
