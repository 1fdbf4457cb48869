//! Plain-text fit artifacts. Numbers use the shortest decimal that parses
//! back to the same value, so a reload is bit-exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

use super::{FactorModel, FitResult, Link};

const MAGIC: &str = "%phrasebias-fit v1";

impl<T: Real> FitResult<T> {
    /// ```text
    /// %phrasebias-fit v1
    /// topic<TAB>BLM
    /// rank<TAB>3
    /// link<TAB>exp
    /// loglik<TAB>-1234.5
    /// converged<TAB>true
    /// iterations<TAB>212
    /// rejected_loglik<TAB>-1301.25
    /// rejected_converged<TAB>true
    /// shape<TAB>m<TAB>n
    /// %U       (m rows of r values)
    /// %w       (one row of r values)
    /// %V       (n rows of r values)
    /// ```
    pub fn to_text(&self, topic_id: &str) -> String {
        let (m, n) = self.model.shape();
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "topic\t{topic_id}");
        let _ = writeln!(out, "rank\t{}", self.rank());
        let _ = writeln!(out, "link\t{}", self.chosen_link);
        let _ = writeln!(out, "loglik\t{}", self.loglik);
        let _ = writeln!(out, "converged\t{}", self.converged);
        let _ = writeln!(out, "iterations\t{}", self.iterations);
        let _ = writeln!(out, "rejected_loglik\t{}", self.rejected_loglik);
        let _ = writeln!(out, "rejected_converged\t{}", self.rejected_converged);
        let _ = writeln!(out, "shape\t{m}\t{n}");
        let row = |out: &mut String, values: &[T]| {
            let cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join("\t"));
        };
        out.push_str("%U\n");
        (0..m).for_each(|i| row(&mut out, self.model.u.row(i)));
        out.push_str("%w\n");
        row(&mut out, &self.model.w);
        out.push_str("%V\n");
        (0..n).for_each(|j| row(&mut out, self.model.v.row(j)));
        out
    }

    /// Parses [`FitResult::to_text`] output; returns the topic and result.
    pub fn from_text(text: &str, origin: &str) -> Result<(String, Self)> {
        let mut cur = Cursor { lines: text.lines().collect(), pos: 0, origin };
        cur.tagged(MAGIC)?;
        let topic = cur.field("topic")?;
        let rank: usize = cur.value("rank")?;
        let link: Link = cur.value("link")?;
        let loglik: T = cur.value("loglik")?;
        let converged: bool = cur.value("converged")?;
        let iterations: usize = cur.value("iterations")?;
        let rejected_loglik: T = cur.value("rejected_loglik")?;
        let rejected_converged: bool = cur.value("rejected_converged")?;
        let shape = cur.tagged("shape")?;
        if shape.len() != 2 {
            return Err(cur.err("expected `shape<TAB>m<TAB>n`"));
        }
        let m: usize = cur.parse(shape[0])?;
        let n: usize = cur.parse(shape[1])?;
        let u = cur.block("%U", m, rank)?;
        let w = cur.block("%w", 1, rank)?;
        let v = cur.block("%V", n, rank)?;
        let model = FactorModel::new(Matrix::from_row_major(m, rank, u), w, Matrix::from_row_major(n, rank, v), link)?;
        Ok((topic, FitResult { model, loglik, converged, iterations, chosen_link: link, rejected_loglik, rejected_converged }))
    }
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    origin: &'a str,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { what: self.origin.to_string(), line: self.pos, message: message.into() }
    }

    fn line(&mut self) -> Result<&'a str> {
        let line = *self.lines.get(self.pos).ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    /// Next line, which must start with `tag`; returns the remaining columns.
    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let line = self.line()?;
        let mut cols = line.split('\t');
        if cols.next() != Some(tag) {
            return Err(self.err(format!("expected `{tag}`")));
        }
        Ok(cols.collect())
    }

    fn field(&mut self, key: &str) -> Result<String> {
        match self.tagged(key)?.as_slice() {
            [value] => Ok(value.to_string()),
            _ => Err(self.err(format!("`{key}` takes exactly one value"))),
        }
    }

    fn parse<V: std::str::FromStr>(&self, s: &str) -> Result<V> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn value<V: std::str::FromStr>(&mut self, key: &str) -> Result<V> {
        let raw = self.field(key)?;
        self.parse(&raw)
    }

    fn block<T: Real>(&mut self, tag: &str, rows: usize, width: usize) -> Result<Vec<T>> {
        self.tagged(tag)?;
        let mut values = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            let row: Vec<&str> = self.line()?.split('\t').collect();
            if row.len() != width {
                return Err(self.err(format!("expected {width} values, found {}", row.len())));
            }
            for v in row {
                values.push(self.parse(v)?);
            }
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_reload() {
        let model = FactorModel::new(
            Matrix::from_rows(&[vec![0.1f64, 1.0 / 3.0], vec![-2.5e-17, 7.0], vec![1e300, -0.0]]),
            vec![std::f64::consts::PI, 1e-9],
            Matrix::from_rows(&[vec![0.2, 0.7], vec![2f64.sqrt(), -1.0], vec![5.0, 6.0]]),
            Link::Relu,
        )
        .unwrap();
        let fit = FitResult {
            model,
            loglik: -12345.678901234567,
            converged: true,
            iterations: 17,
            chosen_link: Link::Relu,
            rejected_loglik: f64::NEG_INFINITY,
            rejected_converged: false,
        };
        let text = fit.to_text("BLM");
        let (topic, back) = FitResult::<f64>::from_text(&text, "mem").unwrap();
        assert_eq!(topic, "BLM");
        assert_eq!(back.to_text("BLM"), text);
        for (a, b) in fit.model.u.as_slice().iter().zip(back.model.u.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.rejected_loglik, f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_truncated() {
        let fit = FitResult {
            model: FactorModel::new(Matrix::from_rows(&[vec![1.0f32]]), vec![1.0], Matrix::from_rows(&[vec![1.0]]), Link::Exp).unwrap(),
            loglik: -1.0,
            converged: true,
            iterations: 1,
            chosen_link: Link::Exp,
            rejected_loglik: -2.0,
            rejected_converged: true,
        };
        let text = fit.to_text("T");
        let cut = &text[..text.len() - 3];
        assert!(FitResult::<f32>::from_text(cut, "mem").is_err());
    }
}
