//! Attribute report text: a fixed template and its inverse.

use std::collections::BTreeMap;

use crate::attrx::{DiameterUnit, LesionStats, PatientAttributes};
use crate::error::{Error, Result};

pub(crate) const LESION_SEP: &str = " \u{2014} ";
const ORGANS_HEADER: &str = "Organ volumes:";
const LESIONS_HEADER: &str = "Lesions:";
const NONE_REPORTED: &str = " none reported.";

/// Formats `x` with one decimal, rounding half to even on the shortest
/// decimal representation of `x` (so `4321.05` becomes `4321.0`).
pub fn format_one_decimal(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let repr = format!("{}", x.abs());
    let (int_part, frac) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let first = frac.bytes().next().map_or(0, |b| b - b'0');
    digits.push(first);
    let rest = frac.get(1..).unwrap_or("");
    let round_up = match rest.bytes().next() {
        None => false,
        Some(b) if b > b'5' => true,
        Some(b) if b < b'5' => false,
        Some(_) => rest[1..].bytes().any(|b| b != b'0') || first % 2 == 1,
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let frac_digit = digits.pop().unwrap_or(0);
    let int_str: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    let int_str = if int_str.is_empty() { "0".to_owned() } else { int_str };
    let zero = int_str.bytes().all(|b| b == b'0') && frac_digit == 0;
    let sign = if x.is_sign_negative() && !zero { "-" } else { "" };
    format!("{sign}{int_str}.{frac_digit}")
}

/// Renders the attribute block shown to the language model.
///
/// ```text
/// Organ volumes:
/// liver: 1500.0 mL
/// Lesions:
/// lung_nodule — count 2, diameters 4.0/7.0 mm, location lung
/// ```
pub fn render_attribute_report(attrs: &PatientAttributes) -> String {
    let mut lines = Vec::new();
    if attrs.organ_volumes_ml.is_empty() {
        lines.push(format!("{ORGANS_HEADER}{NONE_REPORTED}"));
    } else {
        lines.push(ORGANS_HEADER.to_owned());
        for (name, ml) in &attrs.organ_volumes_ml {
            lines.push(format!("{name}: {} mL", format_one_decimal(*ml)));
        }
    }
    if attrs.lesions.is_empty() {
        lines.push(format!("{LESIONS_HEADER}{NONE_REPORTED}"));
    } else {
        lines.push(LESIONS_HEADER.to_owned());
        for (name, stats) in &attrs.lesions {
            let diameters = if stats.diameters_mm.is_empty() {
                "none".to_owned()
            } else {
                let list: Vec<String> = stats.diameters_mm.iter().map(|d| format_one_decimal(*d)).collect();
                format!("{} {}", list.join("/"), attrs.diameter_unit.suffix())
            };
            lines.push(format!(
                "{name}{LESION_SEP}count {}, diameters {diameters}, location {}",
                stats.count, stats.location
            ));
        }
    }
    lines.join("\n")
}

/// Numeric content recovered from rendered attribute text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedAttributes {
    pub organ_volumes_ml: BTreeMap<String, f64>,
    pub lesions: BTreeMap<String, LesionStats>,
    pub diameter_unit: Option<DiameterUnit>,
}

fn bad(line: &str) -> Error {
    Error::SchemaViolation(format!("unrecognized attribute line {line:?}"))
}

fn parse_number(s: &str, line: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| bad(line))
}

fn parse_lesion(line: &str, out: &mut ParsedAttributes) -> Result<()> {
    let (name, rest) = line.split_once(LESION_SEP).ok_or_else(|| bad(line))?;
    let rest = rest.strip_prefix("count ").ok_or_else(|| bad(line))?;
    let (count, rest) = rest.split_once(", diameters ").ok_or_else(|| bad(line))?;
    let (diameters, location) = rest.split_once(", location ").ok_or_else(|| bad(line))?;
    let count = count.parse::<usize>().map_err(|_| bad(line))?;
    let diameters_mm = if diameters == "none" {
        Vec::new()
    } else {
        let (list, unit) = diameters.rsplit_once(' ').ok_or_else(|| bad(line))?;
        let unit = match unit {
            "mm" => DiameterUnit::Millimeters,
            "voxels" => DiameterUnit::Voxels,
            _ => return Err(bad(line)),
        };
        out.diameter_unit = Some(unit);
        list.split('/').map(|d| parse_number(d, line)).collect::<Result<_>>()?
    };
    out.lesions.insert(
        name.to_owned(),
        LesionStats {
            count,
            diameters_mm,
            location: location.to_owned(),
        },
    );
    Ok(())
}

/// Inverse of [`render_attribute_report`]; values come back at one-decimal
/// precision.
pub fn parse_attribute_report(text: &str) -> Result<ParsedAttributes> {
    enum Block {
        None,
        Organs,
        Lesions,
    }
    let mut out = ParsedAttributes::default();
    let mut block = Block::None;
    for line in text.lines() {
        if line.starts_with(ORGANS_HEADER) {
            block = Block::Organs;
        } else if line.starts_with(LESIONS_HEADER) {
            block = Block::Lesions;
        } else {
            match block {
                Block::None => return Err(bad(line)),
                Block::Organs => {
                    let (name, value) = line.split_once(": ").ok_or_else(|| bad(line))?;
                    let value = value.strip_suffix(" mL").ok_or_else(|| bad(line))?;
                    out.organ_volumes_ml.insert(name.to_owned(), parse_number(value, line)?);
                }
                Block::Lesions => parse_lesion(line, &mut out)?,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    #[test]
    fn half_even() {
        assert_eq!(format_one_decimal(4321.05), "4321.0");
        assert_eq!(format_one_decimal(4321.15), "4321.2");
        assert_eq!(format_one_decimal(0.25), "0.2");
        assert_eq!(format_one_decimal(0.35), "0.4");
        assert_eq!(format_one_decimal(0.251), "0.3");
        assert_eq!(format_one_decimal(9.96), "10.0");
        assert_eq!(format_one_decimal(99.95), "100.0");
        assert_eq!(format_one_decimal(7.0), "7.0");
        assert_eq!(format_one_decimal(0.0), "0.0");
        assert_eq!(format_one_decimal(-0.04), "0.0");
        assert_eq!(format_one_decimal(-2.5), "-2.5");
        assert_eq!(format_one_decimal(1e21), "1000000000000000000000.0");
    }

    #[test]
    fn empty_template() {
        let a = PatientAttributes::empty(Spacing::UNIT);
        assert_eq!(
            render_attribute_report(&a),
            "Organ volumes: none reported.\nLesions: none reported."
        );
        assert_eq!(
            parse_attribute_report(&render_attribute_report(&a)).unwrap(),
            ParsedAttributes::default()
        );
    }

    #[test]
    fn lines() {
        let mut a = PatientAttributes::empty(Spacing::UNIT);
        a.organ_volumes_ml.insert("lung".into(), 4321.05);
        a.lesions.insert(
            "nodule".into(),
            LesionStats {
                count: 2,
                diameters_mm: vec![4.0, 7.0],
                location: "lung".into(),
            },
        );
        let text = render_attribute_report(&a);
        assert_eq!(
            text,
            "Organ volumes:\nlung: 4321.0 mL\nLesions:\nnodule \u{2014} count 2, diameters 4.0/7.0 mm, location lung"
        );
        let back = parse_attribute_report(&text).unwrap();
        assert_eq!(back.organ_volumes_ml["lung"], 4321.0);
        assert_eq!(back.lesions["nodule"], a.lesions["nodule"]);
    }

    #[test]
    fn voxel_units_and_no_components() {
        let mut a = PatientAttributes::empty(Spacing::UNIT);
        a.diameter_unit = DiameterUnit::Voxels;
        a.lesions.insert(
            "cyst".into(),
            LesionStats {
                count: 0,
                diameters_mm: vec![],
                location: "unspecified".into(),
            },
        );
        a.lesions.insert(
            "heart_calc".into(),
            LesionStats {
                count: 1,
                diameters_mm: vec![3.0],
                location: "heart and great vessels".into(),
            },
        );
        let text = render_attribute_report(&a);
        assert!(text.contains("cyst \u{2014} count 0, diameters none, location unspecified"));
        assert!(text.contains("diameters 3.0 voxels"));
        let back = parse_attribute_report(&text).unwrap();
        assert_eq!(back.diameter_unit, Some(DiameterUnit::Voxels));
        assert_eq!(back.lesions, a.lesions);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_attribute_report("hello").is_err());
        assert!(parse_attribute_report("Organ volumes:\nliver 3 mL").is_err());
    }
}
