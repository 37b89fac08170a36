//! Demographic numerics from the article infobox.

use std::sync::LazyLock;

use regex::Regex;

use super::wikitext::remove_nested;

/// Square miles per square kilometre.
pub const SQ_MI_PER_SQ_KM: f64 = 0.386102;

pub fn sq_km_to_sq_mi(km2: f64) -> f64 {
    km2 * SQ_MI_PER_SQ_KM
}

pub fn sq_mi_to_sq_km(mi2: f64) -> f64 {
    mi2 / SQ_MI_PER_SQ_KM
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InfoboxNumerics {
    pub population: Option<f64>,
    pub area_sq_mi: Option<f64>,
    pub density_per_sq_mi: Option<f64>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InfoboxReport {
    pub numerics: InfoboxNumerics,
    /// False when the page carries no infobox at all.
    pub found: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AreaUnit {
    SqMi,
    SqKm,
}

const POPULATION_KEYS: &[&str] = &[
    "population_total",
    "population",
    "population_city",
    "population_est",
    "population_estimate",
];
const AREA_KEYS: &[&str] = &[
    "area_total_sq_mi",
    "area_total_km2",
    "area_city_sq_mi",
    "area_city_km2",
    "area_land_sq_mi",
    "area_land_km2",
    "area_total",
    "area",
];
const DENSITY_KEYS: &[&str] = &[
    "population_density_sq_mi",
    "population_density_km2",
    "population_density_city_sq_mi",
    "population_density_city_km2",
    "population_density",
    "density",
];

static NUMERAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?[0-9][0-9,]*(?:\.[0-9]+)?)\s*(.*)$").unwrap());
static REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<ref\b[^>]*/>|<ref\b[^>]*>.*?</ref\s*>|<!--.*?-->").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^>]*>").unwrap());
static WRAPPER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\{\{\s*(?:formatnum|nowrap|nobreak)\s*[:|]\s*([^{}|]*)\}\}").unwrap()
});
static CONVERT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\{\{\s*(?:convert|cvt)\s*\|([^|{}]*)\|([^|{}]*)[^{}]*\}\}").unwrap());

/// Parse population, area, density and coordinates from the first infobox.
///
/// Missing fields are `None`; a value that is present but unparseable is
/// also `None` and adds a warning. Kilometre units are converted to miles and
/// density is derived from population and area when not stated.
pub fn extract_infobox_numerics(raw: &str) -> InfoboxReport {
    let mut report = InfoboxReport::default();
    let Some(body) = infobox_body(raw) else {
        return report;
    };
    report.found = true;
    let params = split_params(body);
    let lookup = |keys: &[&str]| -> Option<(&str, &str)> {
        keys.iter().find_map(|k| {
            params
                .iter()
                .find(|(pk, v)| pk == k && !v.trim().is_empty())
                .map(|(pk, v)| (pk.as_str(), v.as_str()))
        })
    };
    let n = &mut report.numerics;
    let warnings = &mut report.warnings;

    if let Some((key, value)) = lookup(POPULATION_KEYS) {
        n.population = positive(parse_quantity(key, value, warnings).map(|(v, _)| v), key, warnings);
    }
    if let Some((key, value)) = lookup(AREA_KEYS) {
        n.area_sq_mi = positive(
            parse_quantity(key, value, warnings).map(|(v, unit)| match unit {
                AreaUnit::SqKm => sq_km_to_sq_mi(v),
                AreaUnit::SqMi => v,
            }),
            key,
            warnings,
        );
    }
    if let Some((key, value)) = lookup(DENSITY_KEYS) {
        n.density_per_sq_mi = positive(
            parse_quantity(key, value, warnings).map(|(v, unit)| match unit {
                AreaUnit::SqKm => v / SQ_MI_PER_SQ_KM,
                AreaUnit::SqMi => v,
            }),
            key,
            warnings,
        );
    }
    if n.density_per_sq_mi.is_none() {
        if let (Some(p), Some(a)) = (n.population, n.area_sq_mi) {
            n.density_per_sq_mi = Some(p / a);
        }
    }
    if let Some((lat, lon)) = coordinates(&params, warnings) {
        n.lat = Some(lat);
        n.lon = Some(lon);
    }
    report
}

fn positive(v: Option<f64>, key: &str, warnings: &mut Vec<String>) -> Option<f64> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Some(x),
        Some(x) => {
            warnings.push(format!("{key}: non-positive value {x}"));
            None
        }
        None => None,
    }
}

/// Returns the text between `{{Infobox` and its matching `}}`.
fn infobox_body(raw: &str) -> Option<&str> {
    let lower = raw.to_ascii_lowercase();
    let start = lower.find("{{infobox")?;
    let bytes = raw.as_bytes();
    let mut depth = 0usize;
    let mut i = start;
    while i + 1 < bytes.len() {
        if bytes[i] == b'{' && bytes[i + 1] == b'{' {
            depth += 1;
            i += 2;
        } else if bytes[i] == b'}' && bytes[i + 1] == b'}' {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return Some(&raw[start + 2..i - 2]);
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Top-level `key = value` parameters, keys normalized to snake case.
fn split_params(body: &str) -> Vec<(String, String)> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if (c == '{' && next == Some('{')) || (c == '[' && next == Some('[')) {
            depth += 1;
            cur.push(c);
            cur.push(next.unwrap());
            i += 2;
            continue;
        }
        if (c == '}' && next == Some('}')) || (c == ']' && next == Some(']')) {
            depth -= 1;
            cur.push(c);
            cur.push(next.unwrap());
            i += 2;
            continue;
        }
        if c == '|' && depth == 0 {
            parts.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
        i += 1;
    }
    parts.push(cur);
    parts
        .into_iter()
        .skip(1)
        .filter_map(|p| {
            let (k, v) = p.split_once('=')?;
            let key = k.trim().to_lowercase().replace([' ', '-'], "_");
            Some((key, v.trim().to_string()))
        })
        .collect()
}

fn unit_from_text(s: &str) -> Option<AreaUnit> {
    let s = s.to_lowercase();
    if s.contains("km2") || s.contains("km²") || s.contains("km^2") || s.contains("sq km")
        || s.contains("square kilomet")
    {
        Some(AreaUnit::SqKm)
    } else if s.contains("sq mi") || s.contains("sq_mi") || s.contains("mi2") || s.contains("mi²")
        || s.contains("square mile")
    {
        Some(AreaUnit::SqMi)
    } else {
        None
    }
}

/// Leading numeral of an infobox value plus the area unit it is expressed in.
fn parse_quantity(key: &str, value: &str, warnings: &mut Vec<String>) -> Option<(f64, AreaUnit)> {
    let v = REF.replace_all(value, "");
    let v = WRAPPER.replace_all(&v, "$1");
    let v = CONVERT.replace_all(&v, "$1 $2");
    let v = remove_nested(&v, "{{", "}}");
    let v = TAG.replace_all(&v, " ").replace("&nbsp;", " ");
    let v = v.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("auto") {
        return None;
    }
    let Some(caps) = NUMERAL.captures(v) else {
        warnings.push(format!("{key}: malformed numeral {v:?}"));
        return None;
    };
    let digits = caps[1].replace(',', "");
    let Ok(number) = digits.parse::<f64>() else {
        warnings.push(format!("{key}: malformed numeral {v:?}"));
        return None;
    };
    let unit = unit_from_text(&caps[2])
        .or_else(|| unit_from_text(key))
        .unwrap_or(AreaUnit::SqMi);
    Some((number, unit))
}

fn coordinates(params: &[(String, String)], warnings: &mut Vec<String>) -> Option<(f64, f64)> {
    let get = |k: &str| params.iter().find(|(pk, _)| pk == k).map(|(_, v)| v.trim());
    if let Some(v) = get("coordinates").filter(|v| !v.is_empty()) {
        match parse_coord_template(v) {
            Some(c) => return Some(c),
            None => warnings.push(format!("coordinates: unparsed {v:?}")),
        }
    }
    let num = |k: &str| get(k).and_then(|v| v.parse::<f64>().ok());
    if let (Some(lat), Some(lon)) = (
        num("latitude").or_else(|| num("lat")),
        num("longitude").or_else(|| num("lon")).or_else(|| num("long")),
    ) {
        return Some((lat, lon));
    }
    let latd = num("latd")?;
    let longd = num("longd").or_else(|| num("lond"))?;
    let lat = latd + num("latm").unwrap_or(0.0) / 60.0 + num("lats").unwrap_or(0.0) / 3600.0;
    let lon = longd + num("longm").unwrap_or(0.0) / 60.0 + num("longs").unwrap_or(0.0) / 3600.0;
    let lat_sign = match get("latns") {
        Some(s) if s.eq_ignore_ascii_case("s") => -1.0,
        _ => 1.0,
    };
    let lon_sign = match get("longew") {
        Some(s) if s.eq_ignore_ascii_case("w") => -1.0,
        _ => 1.0,
    };
    Some((lat * lat_sign, lon * lon_sign))
}

/// Parse `{{coord|...}}` in decimal or degree/minute/second form.
fn parse_coord_template(v: &str) -> Option<(f64, f64)> {
    let lower = v.to_ascii_lowercase();
    let start = lower.find("{{coord")?;
    let end = v[start..].find("}}")? + start;
    let inner = &v[start + 2..end];
    let args: Vec<&str> = inner
        .split('|')
        .skip(1)
        .map(str::trim)
        .filter(|a| !a.contains('=') && !a.contains(':'))
        .collect();
    let hemi = |a: &str, letters: [&str; 2]| letters.iter().any(|l| a.eq_ignore_ascii_case(l));
    let ns = args.iter().position(|a| hemi(a, ["N", "S"]));
    match ns {
        None => {
            let lat = args.first()?.parse().ok()?;
            let lon = args.get(1)?.parse().ok()?;
            Some((lat, lon))
        }
        Some(i) => {
            let ew = i + 1 + args[i + 1..].iter().position(|a| hemi(a, ["E", "W"]))?;
            let lat = dms(&args[..i])? * if args[i].eq_ignore_ascii_case("s") { -1.0 } else { 1.0 };
            let lon = dms(&args[i + 1..ew])?
                * if args[ew].eq_ignore_ascii_case("w") { -1.0 } else { 1.0 };
            Some((lat, lon))
        }
    }
}

fn dms(parts: &[&str]) -> Option<f64> {
    if parts.is_empty() || parts.len() > 3 {
        return None;
    }
    let mut total = 0.0;
    let mut scale = 1.0;
    for p in parts {
        total += p.parse::<f64>().ok()? / scale;
        scale *= 60.0;
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(body: &str) -> InfoboxReport {
        extract_infobox_numerics(&format!("{{{{Infobox settlement\n{body}\n}}}}\nProse."))
    }

    #[test]
    fn direct_density() {
        let r = parse("| population_density = 10,000/sq mi");
        assert_eq!(r.numerics.density_per_sq_mi, Some(10000.0));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn density_from_population_and_area() {
        let r = parse("| population_total = 1,000,000\n| area_total_sq_mi = 100");
        assert_eq!(r.numerics.density_per_sq_mi, Some(10000.0));
    }

    #[test]
    fn square_kilometres_converted() {
        let r = parse("| area_total = 259 km2");
        let a = r.numerics.area_sq_mi.unwrap();
        // 259 * 0.386102 = 100.000418
        assert!((a - 100.000418).abs() < 1e-9, "{a}");
        let r = parse("| area_total_km2 = 259");
        assert!((r.numerics.area_sq_mi.unwrap() - 259.0 * 0.386102).abs() < 1e-9);
        let r = parse("| population_density_km2 = 1000");
        assert!((r.numerics.density_per_sq_mi.unwrap() - 1000.0 / 0.386102).abs() < 1e-9);
    }

    #[test]
    fn templates_and_refs_in_values() {
        let r = parse(
            "| population_total = {{formatnum:8804190}}<ref name=census/>\n\
             | area_total_sq_mi = {{convert|302.6|sq mi|km2}}\n\
             | population_density_sq_mi = auto",
        );
        assert_eq!(r.numerics.population, Some(8804190.0));
        assert_eq!(r.numerics.area_sq_mi, Some(302.6));
        let d = r.numerics.density_per_sq_mi.unwrap();
        assert!((d - 8804190.0 / 302.6).abs() < 1e-6);
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    }

    #[test]
    fn malformed_numeral_warns() {
        let r = parse("| population_total = about a million\n| area_total_sq_mi = 10");
        assert_eq!(r.numerics.population, None);
        assert_eq!(r.numerics.density_per_sq_mi, None);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn no_infobox_is_not_an_error() {
        let r = extract_infobox_numerics("Just prose. Nothing else.");
        assert!(!r.found);
        assert_eq!(r.numerics, InfoboxNumerics::default());
    }

    #[test]
    fn coordinates_forms() {
        let r = parse("| coordinates = {{coord|40|42|46|N|74|00|22|W|region:US-NY|display=inline,title}}");
        let (lat, lon) = (r.numerics.lat.unwrap(), r.numerics.lon.unwrap());
        assert!((lat - (40.0 + 42.0 / 60.0 + 46.0 / 3600.0)).abs() < 1e-12);
        assert!((lon + 22.0 / 3600.0 + 74.0).abs() < 1e-12);
        let r = parse("| coordinates = {{Coord|23.8|90.4}}");
        assert_eq!((r.numerics.lat, r.numerics.lon), (Some(23.8), Some(90.4)));
        let r = parse("| latd = 10 | latm = 30 | latNS = S | longd = 20 | longEW = W");
        assert_eq!((r.numerics.lat, r.numerics.lon), (Some(-10.5), Some(-20.0)));
    }

    #[test]
    fn unit_round_trip() {
        for x in [1e-3, 1.0, 259.0, 12345.678] {
            let back = sq_km_to_sq_mi(sq_mi_to_sq_km(x));
            assert!(((back - x) / x).abs() < 1e-6);
        }
    }
}
