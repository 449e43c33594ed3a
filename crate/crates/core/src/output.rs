//! Versioned CSV text with locale-free number formatting.

use std::fmt::Write as _;

/// Full-precision scientific notation; non-finite values spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Undefined statistics are written as `NA`.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "NA".to_string())
}

/// A CSV document: `# schema=<name>` comment line, header, rows.
#[derive(Clone, Debug)]
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(schema: &str, header: &[S]) -> Csv {
        let mut buf = format!("# schema={schema}\n");
        let names: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
        buf.push_str(&names.join(","));
        buf.push('\n');
        Csv { buf, columns: header.len() }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut n = 0;
        for (i, f) in fields.into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{}", f.as_ref());
            n += 1;
        }
        debug_assert_eq!(n, self.columns, "row width does not match header");
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}
