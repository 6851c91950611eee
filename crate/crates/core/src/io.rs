//! File formats: field CSV, domain/kernel/involution JSON.
//!
//! A field file has the header `x0,...,x{d-1},u0,...,u{d-1}` and one row per
//! cell. Rows may come in any order; each is matched to a grid point.

use std::io::{Read, Write};

use crate::domain::{AntiSymmetricKernel, DiscreteDomain, DomainSpec, Involution, SampledField};
use crate::{Error, Result};

fn expected_header(d: usize) -> Vec<String> {
    (0..d).map(|k| format!("x{k}")).chain((0..d).map(|k| format!("u{k}"))).collect()
}

/// Reads a field file sampled on `dom`.
pub fn read_field_csv<R: Read>(input: R, dom: &DiscreteDomain) -> Result<SampledField> {
    let d = dom.dim();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != expected_header(d) {
        return Err(Error::Parse(format!("field header {:?}, expected {:?}", header, expected_header(d))));
    }
    let tol = 1e-9 * (1.0 + dom.radius());
    let mut values = vec![f64::NAN; dom.len() * d];
    let mut seen = vec![false; dom.len()];
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let nums = record
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: `{s}`: {e}", r + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() != 2 * d {
            return Err(Error::Parse(format!("row {} has {} columns, expected {}", r + 1, nums.len(), 2 * d)));
        }
        let i = dom
            .locate(&nums[..d], tol)
            .ok_or_else(|| Error::Parse(format!("row {}: point {:?} is not a grid point", r + 1, &nums[..d])))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Parse(format!("row {}: grid point {i} appears twice", r + 1)));
        }
        values[i * d..(i + 1) * d].copy_from_slice(&nums[d..]);
        rows += 1;
    }
    if rows != dom.len() {
        return Err(Error::LengthMismatch { expected: dom.len(), actual: rows });
    }
    SampledField::from_values(dom, values)
}

pub fn write_field_csv<W: Write>(out: W, dom: &DiscreteDomain, field: &SampledField) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(expected_header(dom.dim()))?;
    for i in 0..dom.len() {
        let row: Vec<String> = dom.point(i).iter().chain(field.value(i)).map(|v| v.to_string()).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_domain_json<R: Read>(input: R) -> Result<DomainSpec> {
    Ok(serde_json::from_reader(input)?)
}

/// Accepts a kernel object `{"n", "upper"}` or any object with a `kernel`
/// key, such as a primal solution.
pub fn read_kernel_json<R: Read>(input: R) -> Result<AntiSymmetricKernel> {
    let mut value: serde_json::Value = serde_json::from_reader(input)?;
    if let Some(k) = value.as_object_mut().and_then(|m| m.remove("kernel")) {
        value = k;
    }
    Ok(serde_json::from_value(value)?)
}

/// Accepts either a bare index array or any object with a `sigma` array,
/// such as a decomposition report.
pub fn read_sigma_json<R: Read>(input: R) -> Result<Involution> {
    let value: serde_json::Value = serde_json::from_reader(input)?;
    let sigma = match value {
        serde_json::Value::Object(mut map) => map
            .remove("sigma")
            .ok_or_else(|| Error::Parse("object has no `sigma` key".into()))?,
        other => other,
    };
    Ok(serde_json::from_value(sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, sample_field};

    #[test]
    fn field_round_trip_in_any_order() {
        let dom = build_grid(&DomainSpec::symmetric_square(1.0, 3)).unwrap();
        let field = sample_field(&dom, |x| vec![x[0] - x[1], 0.1 * x[0]]).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &dom, &field).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,x1,u0,u1\n"));
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        let back = read_field_csv(lines.join("\n").as_bytes(), &dom).unwrap();
        assert_eq!(back, field);
    }

    #[test]
    fn field_errors() {
        let dom = build_grid(&DomainSpec::interval(0.0, 1.0, 2)).unwrap();
        assert!(matches!(read_field_csv("x,u\n0.25,1\n0.75,2\n".as_bytes(), &dom), Err(Error::Parse(_))));
        assert!(matches!(read_field_csv("x0,u0\n0.25,1\n".as_bytes(), &dom), Err(Error::LengthMismatch { .. })));
        assert!(matches!(read_field_csv("x0,u0\n0.25,1\n0.25,2\n".as_bytes(), &dom), Err(Error::Parse(_))));
        assert!(matches!(read_field_csv("x0,u0\n0.3,1\n0.75,2\n".as_bytes(), &dom), Err(Error::Parse(_))));
        assert!(matches!(read_field_csv("x0,u0\n0.25,abc\n0.75,2\n".as_bytes(), &dom), Err(Error::Parse(_))));
        assert!(matches!(read_field_csv("x0,u0\n0.25,NaN\n0.75,2\n".as_bytes(), &dom), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn json_inputs() {
        let spec = read_domain_json(r#"{"kind":"interval","bounds":[0,1],"cells":4}"#.as_bytes()).unwrap();
        assert_eq!(spec, DomainSpec::interval(0.0, 1.0, 4));
        let b = read_domain_json(r#"{"kind":"box","bounds":[[0,1],[0,2]],"cells":[2,3]}"#.as_bytes()).unwrap();
        assert_eq!(b.dim(), 2);
        assert!(read_domain_json(r#"{"kind":"interval","bounds":[0,1],"cells":4,"x":1}"#.as_bytes()).is_err());
        assert!(read_domain_json(r#"{"kind":"disk"}"#.as_bytes()).is_err());

        assert_eq!(read_sigma_json("[1,0,2]".as_bytes()).unwrap(), Involution::new(vec![1, 0, 2]).unwrap());
        assert_eq!(read_sigma_json(r#"{"P":1,"sigma":[0,1]}"#.as_bytes()).unwrap(), Involution::identity(2));
        assert!(read_sigma_json("[1,2,0]".as_bytes()).is_err());
        assert!(read_sigma_json(r#"{"s":[0]}"#.as_bytes()).is_err());

        let k = read_kernel_json(r#"{"n":3,"upper":[1,2,3]}"#.as_bytes()).unwrap();
        assert_eq!(k.get(2, 1), -3.0);
        assert!(read_kernel_json(r#"{"n":3,"upper":[1,2]}"#.as_bytes()).is_err());
        let wrapped = read_kernel_json(r#"{"value":0,"kernel":{"n":3,"upper":[1,2,3]}}"#.as_bytes()).unwrap();
        assert_eq!(wrapped, k);
    }
}
