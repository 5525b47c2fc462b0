use nalgebra::Vector2;

use super::GuidanceError;
use crate::textfmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnnotationKind {
    Point(Vector2<f64>),
    Line(Vector2<f64>, Vector2<f64>),
}

/// A pixel annotation on one calibrated X-ray view. Pixels outside the
/// detector are allowed; their rays simply extrapolate.
///
/// Text form, one per line: `view_id point u v color` or
/// `view_id line u1 v1 u2 v2 color`.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub view_id: String,
    pub kind: AnnotationKind,
    pub color: u32,
}

impl Annotation {
    pub fn point(view_id: impl Into<String>, pixel: Vector2<f64>, color: u32) -> Self {
        Self {
            view_id: view_id.into(),
            kind: AnnotationKind::Point(pixel),
            color,
        }
    }

    pub fn line(view_id: impl Into<String>, a: Vector2<f64>, b: Vector2<f64>, color: u32) -> Self {
        Self {
            view_id: view_id.into(),
            kind: AnnotationKind::Line(a, b),
            color,
        }
    }

    pub fn to_line(&self) -> String {
        match self.kind {
            AnnotationKind::Point(p) => {
                format!(
                    "{} point {} {}",
                    self.view_id,
                    textfmt::join_numbers(&[p.x, p.y]),
                    self.color
                )
            }
            AnnotationKind::Line(a, b) => format!(
                "{} line {} {}",
                self.view_id,
                textfmt::join_numbers(&[a.x, a.y, b.x, b.y]),
                self.color
            ),
        }
    }

    pub fn parse_line(line: &str) -> Result<Self, GuidanceError> {
        let bad = |m: &str| GuidanceError::Parse(format!("{m}: {line:?}"));
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 2 {
            return Err(bad("annotation needs a view id and a kind"));
        }
        let n = match tok[1] {
            "point" => 2,
            "line" => 4,
            _ => return Err(bad("kind must be point or line")),
        };
        if tok.len() != 2 + n + 1 {
            return Err(bad("wrong number of fields"));
        }
        let nums = textfmt::parse_numbers(&tok[2..2 + n].join(" ")).map_err(GuidanceError::Parse)?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite pixel coordinate"));
        }
        let color: u32 = tok[2 + n]
            .parse()
            .map_err(|_| bad("color must be a small integer"))?;
        let kind = if n == 2 {
            AnnotationKind::Point(Vector2::new(nums[0], nums[1]))
        } else {
            AnnotationKind::Line(Vector2::new(nums[0], nums[1]), Vector2::new(nums[2], nums[3]))
        };
        Ok(Self {
            view_id: tok[0].to_string(),
            kind,
            color,
        })
    }
}

/// Parses an annotation file, skipping blank lines and `#` comments.
pub fn read_annotations(text: &str) -> Result<Vec<Annotation>, GuidanceError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(Annotation::parse_line)
        .collect()
}

pub fn write_annotations(annotations: &[Annotation]) -> String {
    annotations.iter().map(|a| a.to_line() + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let list = vec![
            Annotation::point("v1", Vector2::new(510.25, -3.0), 0),
            Annotation::line("v2", Vector2::new(0.1, 0.2), Vector2::new(1e3, 7.0), 4),
        ];
        let text = write_annotations(&list);
        assert_eq!(text, "v1 point 510.25 -3 0\nv2 line 0.1 0.2 1000 7 4\n");
        assert_eq!(read_annotations(&format!("# x\n\n{text}")).unwrap(), list);
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "v1 point 1 2",
            "v1 circle 1 2 3",
            "v1 line 1 2 3 4",
            "v1 point 1 2 -1",
            "v1 point nan 2 1",
        ] {
            assert!(Annotation::parse_line(bad).is_err(), "{bad}");
        }
    }
}
