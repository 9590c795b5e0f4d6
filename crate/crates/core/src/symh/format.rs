//! Line-oriented text format for SYMH trees.
//!
//! ```text
//! SYMH v1
//! A
//! L cx cy cz ex ey ez a1x a1y a1z a2x a2y a2z
//! S nx ny nz px py pz
//! L ...
//! ```
//!
//! One node per line in pre-order. Numbers are written in Rust's shortest
//! round-trip form so `parse_tree(serialize_tree(t)) == t` bit for bit.
//! Parsing is purely syntactic; run [`validate_tree`](super::validate_tree)
//! on the result before trusting its structure.

use std::fmt::Write as _;

use super::obb::{Obb, SymmetryParam, Vec3};
use super::tree::{SymhNode, SymhTree};
use crate::error::{Error, Result};

pub const HEADER: &str = "SYMH v1";

pub fn serialize_tree(tree: &SymhTree) -> String {
    let mut out = String::with_capacity(64 + tree.len() * 160);
    out.push_str(HEADER);
    out.push('\n');
    for node in tree.nodes() {
        match node {
            SymhNode::Adjacency => out.push('A'),
            SymhNode::Symmetry(s) => {
                out.push('S');
                write_numbers(&mut out, &s.to_code());
            }
            SymhNode::Leaf(o) => {
                out.push('L');
                write_numbers(&mut out, &o.to_code());
            }
        }
        out.push('\n');
    }
    out
}

fn write_numbers(out: &mut String, values: &[f64]) {
    for v in values {
        write!(out, " {v:?}").expect("write to String");
    }
}

pub fn parse_tree(text: &str) -> Result<SymhTree> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        None => return Err(parse_err(1, "empty input")),
        Some((_, header)) if header == HEADER => {}
        Some((n, other)) => return Err(parse_err(n, format!("expected `{HEADER}`, found `{other}`"))),
    }
    let mut nodes = Vec::new();
    for (line, content) in lines {
        if content.is_empty() {
            return Err(parse_err(line, "blank line"));
        }
        let mut fields = content.split_ascii_whitespace();
        let tag = fields.next().unwrap_or_default();
        let numbers = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("`{f}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let expect = |n: usize| -> Result<()> {
            if numbers.len() == n {
                Ok(())
            } else {
                Err(parse_err(line, format!("`{tag}` expects {n} numbers, found {}", numbers.len())))
            }
        };
        let node = match tag {
            "A" => {
                expect(0)?;
                SymhNode::Adjacency
            }
            "S" => {
                expect(6)?;
                SymhNode::Symmetry(SymmetryParam {
                    normal: Vec3::new(numbers[0], numbers[1], numbers[2]),
                    point: Vec3::new(numbers[3], numbers[4], numbers[5]),
                })
            }
            "L" => {
                expect(12)?;
                let v = |k: usize| Vec3::new(numbers[k], numbers[k + 1], numbers[k + 2]);
                SymhNode::Leaf(Obb { center: v(0), extents: v(3), axis1: v(6), axis2: v(9) })
            }
            other => return Err(parse_err(line, format!("unknown node tag `{other}`"))),
        };
        nodes.push(node);
    }
    if nodes.is_empty() {
        return Err(parse_err(2, "no nodes after header"));
    }
    Ok(SymhTree::from_nodes_unchecked(nodes))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SymhTree {
        let obb = Obb::new(
            Vec3::new(0.1, -2.5e-7, 3.0),
            Vec3::new(1.0 / 3.0, 2.0, 1e-4),
            Vec3::new(0.6, 0.8, 0.0),
            Vec3::new(-0.8, 0.6, 0.0),
        )
        .unwrap();
        SymhTree::adjacency(
            SymhTree::leaf(obb),
            SymhTree::symmetry(SymhTree::leaf(obb), SymmetryParam::bilateral()),
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let t = sample();
        let text = serialize_tree(&t);
        let back = parse_tree(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(serialize_tree(&back), text);
        assert!(text.starts_with("SYMH v1\nA\nL "));
    }

    #[test]
    fn parse_errors_carry_location() {
        assert!(matches!(parse_tree(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_tree("SYMH v2\nA\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_tree("SYMH v1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_tree("SYMH v1\nA\nL 1 2\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_tree("SYMH v1\nX\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_tree("SYMH v1\nS 0 1 0 0 zero 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn structurally_incomplete_text_parses_but_fails_validation() {
        let t = parse_tree("SYMH v1\nA\n").unwrap();
        assert_eq!(super::super::validate_tree(&t)[0].kind, "arity");
    }
}
