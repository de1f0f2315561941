use super::SurveyPlaque;
use crate::{Error, Result};

pub const SURVEY_HEADER: [&str; 4] = ["id", "v_ha", "area_ha", "pixels"];

fn parse_error(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, msg: msg.into() }
}

fn parse_number(field: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(line, format!("{what} {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("{what} must be finite")));
    }
    Ok(v)
}

fn parse_pixels(field: &str, line: u64) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for pair in field.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (r, c) = pair
            .split_once(':')
            .ok_or_else(|| parse_error(line, format!("pixel {pair:?} is not row:col")))?;
        let r = r.trim().parse().map_err(|_| parse_error(line, format!("bad row in {pair:?}")))?;
        let c = c.trim().parse().map_err(|_| parse_error(line, format!("bad column in {pair:?}")))?;
        out.push((r, c));
    }
    if out.is_empty() {
        return Err(parse_error(line, "empty pixel list"));
    }
    Ok(out)
}

/// Parses a survey table with header `id,v_ha,area_ha,pixels`, where
/// `pixels` is a `;`-separated list of `row:col` pairs. Errors carry the
/// 1-based line number.
pub fn parse_survey(text: &str) -> Result<Vec<SurveyPlaque>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_error(1, e.to_string()))?;
    if header.iter().ne(SURVEY_HEADER) {
        return Err(parse_error(
            1,
            format!("expected header {}, got {}", SURVEY_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut plaques = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(parse_error(line, format!("expected 4 fields, got {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse_error(line, "empty plaque id"));
        }
        let v_ha = parse_number(&rec[1], "v_ha", line)?;
        if v_ha < 0.0 {
            return Err(parse_error(line, "v_ha must be nonnegative"));
        }
        let area_ha = parse_number(&rec[2], "area_ha", line)?;
        if area_ha <= 0.0 {
            return Err(parse_error(line, "area_ha must be positive"));
        }
        let footprint = parse_pixels(&rec[3], line)?;
        plaques.push(SurveyPlaque { id, v_ha, area_ha, footprint });
    }
    Ok(plaques)
}

/// Inverse of [`parse_survey`].
pub fn write_survey(plaques: &[SurveyPlaque]) -> String {
    let mut out = SURVEY_HEADER.join(",");
    out.push('\n');
    for p in plaques {
        let px: Vec<String> = p.footprint.iter().map(|(r, c)| format!("{r}:{c}")).collect();
        out.push_str(&format!("{},{},{},{}\n", p.id, p.v_ha, p.area_ha, px.join(";")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_plaques() {
        let text = "id,v_ha,area_ha,pixels\na,100,1,0:0;0:1\nb,50.5,2,3:4\n";
        let p = parse_survey(text).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].footprint, vec![(0, 0), (0, 1)]);
        assert_eq!(p[1].v_ha, 50.5);
        assert_eq!(parse_survey(&write_survey(&p)).unwrap(), p);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "id,v_ha,area_ha,pixels\na,100,1,0:0\nb,abc,1,1:1\n";
        match parse_survey(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_survey("id,volume,area,pixels\n").is_err());
    }

    #[test]
    fn malformed_pixels_rejected() {
        for bad in ["0-0", "", "x:1", "1:"] {
            let text = format!("id,v_ha,area_ha,pixels\na,1,1,{bad}\n");
            assert!(parse_survey(&text).is_err(), "{bad}");
        }
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_survey("id,v_ha,area_ha,pixels\n").unwrap().is_empty());
    }
}
