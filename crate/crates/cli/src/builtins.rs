//! Named spaces accepted on the command line.
//!
//! `D<n>` diagonal algebra, `M<n>` full matrices, `M<k>x<n>` (or `M<k>,<n>`)
//! rectangular k×n matrices, `R<n>` rows, `C<n>` columns, `C` the scalars.

use opsym::ConcreteOpSpace;

use crate::{CliError, CliResult};

fn dims_of(rest: &str, name: &str) -> CliResult<Vec<usize>> {
    rest.split(['x', ','])
        .map(|p| p.parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Usage(format!("unknown space {name:?}")))
}

pub fn space(name: &str) -> CliResult<ConcreteOpSpace> {
    let bad = || CliError::Usage(format!("unknown space {name:?}"));
    if name == "C" {
        return Ok(ConcreteOpSpace::scalars());
    }
    let (head, rest) = name.split_at(1.min(name.len()));
    let d = dims_of(rest, name)?;
    Ok(match (head, d.as_slice()) {
        ("D", [n]) => ConcreteOpSpace::diagonal(*n),
        ("M", [n]) => ConcreteOpSpace::full(*n),
        ("M", [k, n]) => ConcreteOpSpace::rect(*k, *n),
        ("R", [n]) => ConcreteOpSpace::row(*n),
        ("C", [n]) => ConcreteOpSpace::column(*n),
        _ => return Err(bad()),
    })
}

/// Space used by the dimension obstruction. There the column space Cₙ is
/// the one whose products E*E fill Mₙ; in the concrete convention here
/// (E ⊆ B(ℂʰ, ℂᵏ), products inside B(ℂʰ)) that is the row space.
pub fn obstruction_space(name: &str) -> CliResult<(ConcreteOpSpace, String)> {
    match name.strip_prefix('C').filter(|r| !r.is_empty()) {
        Some(rest) => {
            let n = dims_of(rest, name)?;
            match n.as_slice() {
                [n] => Ok((ConcreteOpSpace::row(*n), format!("R{n}"))),
                _ => Err(CliError::Usage(format!("unknown space {name:?}"))),
            }
        }
        None => Ok((space(name)?, name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        assert_eq!(space("D3").unwrap().dim(), 3);
        assert_eq!(space("M2").unwrap().dim(), 4);
        let r = space("M3x2").unwrap();
        assert_eq!((r.k(), r.h()), (3, 2));
        assert_eq!(space("M4,2").unwrap().dim(), 8);
        assert_eq!(space("R2").unwrap().k(), 1);
        assert_eq!(space("C2").unwrap().h(), 1);
        assert_eq!(space("C").unwrap().dim(), 1);
        assert!(space("Q2").is_err());
        assert!(space("M0").is_err());
        assert!(space("").is_err());
        let (e, label) = obstruction_space("C3").unwrap();
        assert_eq!((e.k(), label.as_str()), (1, "R3"));
    }
}
