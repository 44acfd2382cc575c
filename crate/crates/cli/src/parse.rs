//! Flag-value parsing: probabilities that stay exact, and integer grids.
//!
//! Probabilities accept `p/q` rationals, decimal strings, and scientific
//! notation; all three convert to exact rationals by place value, so
//! `--mode exact` computes with precisely the number the user typed.
//! Integer grids accept comma-separated items where each item is a single
//! value or an inclusive `a..b` range.

use clickcounter::{parse_exact_rational, rational_to_f64, ExactRational};

use crate::CliError;

/// A probability parameter in the three forms the program needs: the
/// original text (echoed into output metadata), the exact rational, and
/// the rounded double.
#[derive(Clone, Debug)]
pub struct Prob {
    pub text: String,
    pub exact: ExactRational,
    pub value: f64,
}

pub fn parse_prob(s: &str) -> Result<Prob, CliError> {
    let exact = parse_exact_rational(s)?;
    let value = rational_to_f64(&exact);
    Ok(Prob {
        text: s.trim().to_string(),
        exact,
        value,
    })
}

/// Comma-separated probabilities.
pub fn parse_prob_list(s: &str) -> Result<Vec<Prob>, CliError> {
    let items: Vec<Prob> = s.split(',').map(parse_prob).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Invalid(format!("empty probability list `{s}`")));
    }
    Ok(items)
}

/// Comma-separated integers and inclusive `a..b` ranges, e.g. `1,4..6,9`
/// → `[1, 4, 5, 6, 9]`.
pub fn parse_u64_multi(s: &str) -> Result<Vec<u64>, CliError> {
    let mut values = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: u64 = parse_int(lo)?;
            let hi: u64 = parse_int(hi.strip_prefix('=').unwrap_or(hi))?;
            if lo > hi {
                return Err(CliError::Invalid(format!(
                    "range `{item}` is not well-ordered"
                )));
            }
            values.extend(lo..=hi);
        } else {
            values.push(parse_int(item)?);
        }
    }
    if values.is_empty() {
        return Err(CliError::Invalid(format!("empty integer list `{s}`")));
    }
    Ok(values)
}

/// As [`parse_u64_multi`] but for coupler counts.
pub fn parse_u32_multi(s: &str) -> Result<Vec<u32>, CliError> {
    parse_u64_multi(s)?
        .into_iter()
        .map(|v| {
            u32::try_from(v)
                .map_err(|_| CliError::Invalid(format!("value {v} is too large for this flag")))
        })
        .collect()
}

fn parse_int(s: &str) -> Result<u64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Invalid(format!("cannot parse `{s}` as a nonnegative integer")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_decimal_and_scientific_forms_parse() {
        assert_eq!(parse_prob("3/4").unwrap().value, 0.75);
        assert_eq!(parse_prob("0.95").unwrap().value, 0.95);
        assert_eq!(parse_prob("1e-4").unwrap().value, 1e-4);
        let exact = parse_prob("0.95").unwrap().exact;
        assert_eq!(exact, parse_prob("19/20").unwrap().exact);
        assert!(parse_prob("abc").is_err());
    }

    #[test]
    fn integer_grids_expand_lists_and_inclusive_ranges() {
        assert_eq!(parse_u64_multi("5").unwrap(), vec![5]);
        assert_eq!(parse_u64_multi("1,2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_u64_multi("4..7").unwrap(), vec![4, 5, 6, 7]);
        assert_eq!(parse_u64_multi("4..=6").unwrap(), vec![4, 5, 6]);
        assert_eq!(parse_u64_multi("1,4..6,9").unwrap(), vec![1, 4, 5, 6, 9]);
        assert!(parse_u64_multi("6..4").is_err());
        assert!(parse_u64_multi("x").is_err());
    }
}
