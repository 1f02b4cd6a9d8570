//! CSV ingestion and emission.
//!
//! Three file shapes: couple records with a header row, contingency tables
//! whose first row and column hold the category values, and bare numeric
//! count matrices. Parse errors carry 1-based line numbers; the header is
//! line 1.

use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};

use matchkit::association::{CoupleDataset, CoupleRecord};
use matchkit::market::BivariateTable;

use crate::Failure;

const LEVEL_MIN: f64 = 1.0;
const LEVEL_MAX: f64 = 5.0;
const MAX_RANGE_WARNINGS: usize = 5;

fn data_err(path: &Path, msg: String) -> Failure {
    Failure::Data(format!("{}: {msg}", path.display()))
}

fn read_records(path: &Path) -> Result<Vec<StringRecord>, Failure> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .trim(Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(path, e.to_string()))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    Ok(rows)
}

fn line_of(rec: &StringRecord, fallback: u64) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(fallback)
}

fn parse_cell(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64, Failure> {
    raw.parse::<f64>().map_err(|_| {
        data_err(
            path,
            format!("line {line}: column '{name}': expected a number, found '{raw}'"),
        )
    })
}

/// Column layout of a couples file. The generic form names attributes by
/// position; the labeled form carries health and education columns for each
/// side in any order, with health stored first in each record.
enum Layout {
    Generic { x_dim: usize, y_dim: usize },
    Labeled { weight: Option<usize>, x: [usize; 2], y: [usize; 2] },
}

fn classify_header(path: &Path, header: &StringRecord) -> Result<Layout, Failure> {
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names.iter().any(|n| n == "x_e" || n == "x_h" || n == "y_e" || n == "y_h") {
        let mut weight = None;
        let mut x = [usize::MAX; 2];
        let mut y = [usize::MAX; 2];
        for (i, n) in names.iter().enumerate() {
            match n.as_str() {
                "weight" => weight = Some(i),
                "x_h" => x[0] = i,
                "x_e" => x[1] = i,
                "y_h" => y[0] = i,
                "y_e" => y[1] = i,
                other => {
                    return Err(data_err(
                        path,
                        format!("line 1: unexpected column '{other}' in a labeled header"),
                    ))
                }
            }
        }
        if x.contains(&usize::MAX) || y.contains(&usize::MAX) {
            return Err(data_err(
                path,
                "line 1: labeled header needs all of x_E, x_H, y_E, y_H".into(),
            ));
        }
        return Ok(Layout::Labeled { weight, x, y });
    }
    if names.first().map(String::as_str) != Some("weight") {
        return Err(data_err(
            path,
            "line 1: expected header weight,x_1..x_K,y_1..y_L or labeled x_E,x_H,y_E,y_H columns"
                .into(),
        ));
    }
    let mut x_dim = 0;
    let mut y_dim = 0;
    for n in &names[1..] {
        let expect_x = format!("x_{}", x_dim + 1);
        let expect_y = format!("y_{}", y_dim + 1);
        if y_dim == 0 && n == &expect_x {
            x_dim += 1;
        } else if x_dim > 0 && n == &expect_y {
            y_dim += 1;
        } else {
            return Err(data_err(
                path,
                format!("line 1: unexpected column '{n}', expected '{expect_x}' or '{expect_y}'"),
            ));
        }
    }
    if x_dim == 0 || y_dim == 0 {
        return Err(data_err(
            path,
            "line 1: header needs at least one x_ and one y_ column after weight".into(),
        ));
    }
    Ok(Layout::Generic { x_dim, y_dim })
}

fn check_level(
    line: u64,
    name: &str,
    v: f64,
    hits: &mut usize,
    warnings: &mut Vec<String>,
) {
    let is_level = v.fract() == 0.0 && (LEVEL_MIN..=LEVEL_MAX).contains(&v);
    if !is_level {
        *hits += 1;
        if *hits <= MAX_RANGE_WARNINGS {
            warnings.push(format!("line {line}: {name}={v} outside the 1-5 coding"));
        }
    }
}

/// Reads a couples CSV. Labeled files get a range warning for every level
/// outside the 1-5 coding; the generic form declares no coding, so it is
/// not checked here.
pub fn parse_couples(path: &Path) -> Result<(CoupleDataset, Vec<String>), Failure> {
    let rows = read_records(path)?;
    let header = rows
        .first()
        .ok_or_else(|| data_err(path, "empty file, expected a header row".into()))?;
    let layout = classify_header(path, header)?;
    let width = header.len();
    let mut records = Vec::with_capacity(rows.len().saturating_sub(1));
    let mut warnings = Vec::new();
    let mut range_hits = 0usize;
    for (i, rec) in rows.iter().enumerate().skip(1) {
        let line = line_of(rec, i as u64 + 1);
        if rec.len() != width {
            return Err(data_err(
                path,
                format!("line {line}: {} fields, expected {width}", rec.len()),
            ));
        }
        let record = match &layout {
            Layout::Generic { x_dim, y_dim } => {
                let mut cells = Vec::with_capacity(rec.len());
                for (j, raw) in rec.iter().enumerate() {
                    cells.push(parse_cell(path, line, &header[j], raw)?);
                }
                CoupleRecord {
                    weight: cells[0],
                    x: cells[1..1 + x_dim].to_vec(),
                    y: cells[1 + x_dim..1 + x_dim + y_dim].to_vec(),
                }
            }
            Layout::Labeled { weight, x, y } => {
                let get = |col: usize| parse_cell(path, line, &header[col], &rec[col]);
                let w = match weight {
                    Some(col) => get(*col)?,
                    None => 1.0,
                };
                let xv = vec![get(x[0])?, get(x[1])?];
                let yv = vec![get(y[0])?, get(y[1])?];
                for (col, v) in x.iter().chain(y.iter()).zip([xv[0], xv[1], yv[0], yv[1]]) {
                    check_level(line, &header[*col], v, &mut range_hits, &mut warnings);
                }
                CoupleRecord { weight: w, x: xv, y: yv }
            }
        };
        records.push(record);
    }
    if range_hits > MAX_RANGE_WARNINGS {
        warnings.push(format!(
            "{} more values outside the 1-5 coding not listed",
            range_hits - MAX_RANGE_WARNINGS
        ));
    }
    let data = CoupleDataset { records };
    data.validate()?;
    Ok((data, warnings))
}

/// Reads a contingency table: first row holds the column category values
/// (the corner cell is ignored), first column the row category values.
pub fn read_joint_table(path: &Path) -> Result<BivariateTable, Failure> {
    let rows = read_records(path)?;
    if rows.len() < 2 {
        return Err(data_err(
            path,
            "a contingency table needs a header row and at least one data row".into(),
        ));
    }
    let header = &rows[0];
    if header.len() < 2 {
        return Err(data_err(path, "line 1: a contingency table needs at least one column".into()));
    }
    let mut col_values = Vec::with_capacity(header.len() - 1);
    for (j, raw) in header.iter().enumerate().skip(1) {
        col_values.push(parse_cell(path, line_of(header, 1), &format!("column {}", j + 1), raw)?);
    }
    let mut row_values = Vec::with_capacity(rows.len() - 1);
    let mut mass = Vec::with_capacity(rows.len() - 1);
    for (i, rec) in rows.iter().enumerate().skip(1) {
        let line = line_of(rec, i as u64 + 1);
        if rec.len() != header.len() {
            return Err(data_err(
                path,
                format!("line {line}: {} fields, expected {}", rec.len(), header.len()),
            ));
        }
        row_values.push(parse_cell(path, line, "row value", &rec[0])?);
        let mut row = Vec::with_capacity(rec.len() - 1);
        for (j, raw) in rec.iter().enumerate().skip(1) {
            row.push(parse_cell(path, line, &format!("column {}", j + 1), raw)?);
        }
        mass.push(row);
    }
    Ok(BivariateTable { row_values, col_values, mass })
}

/// Reads a numeric matrix. A header row and label column are stripped when
/// the corner cell is empty or non-numeric; otherwise every cell must be a
/// number.
pub fn read_counts_matrix(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let rows = read_records(path)?;
    if rows.is_empty() {
        return Err(data_err(path, "empty file".into()));
    }
    let headered = rows[0].get(0).map(|c| c.parse::<f64>().is_err()).unwrap_or(true);
    let skip = usize::from(headered);
    let mut out = Vec::with_capacity(rows.len() - skip);
    let mut width = None;
    for (i, rec) in rows.iter().enumerate().skip(skip) {
        let line = line_of(rec, i as u64 + 1);
        let mut row = Vec::with_capacity(rec.len());
        for (j, raw) in rec.iter().enumerate().skip(skip) {
            row.push(parse_cell(path, line, &format!("column {}", j + 1), raw)?);
        }
        if row.is_empty() {
            return Err(data_err(path, format!("line {line}: no data columns")));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(data_err(
                    path,
                    format!("line {line}: {} data columns, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(data_err(path, "no data rows".into()));
    }
    Ok(out)
}

fn number(v: f64) -> String {
    format!("{v}")
}

/// Writes couples with the generic header; a K- and L-attribute dataset
/// gets columns weight,x_1..x_K,y_1..y_L.
pub fn write_couples_csv(path: &Path, data: &CoupleDataset) -> Result<(), Failure> {
    let mut w = WriterBuilder::new()
        .from_path(path)
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
    let (x_dim, y_dim) = data
        .records
        .first()
        .map(|r| (r.x.len(), r.y.len()))
        .unwrap_or((0, 0));
    let mut header = vec!["weight".to_string()];
    header.extend((1..=x_dim).map(|k| format!("x_{k}")));
    header.extend((1..=y_dim).map(|l| format!("y_{l}")));
    let io_err = |e: csv::Error| Failure::Data(format!("cannot write {}: {e}", path.display()));
    w.write_record(&header).map_err(io_err)?;
    for rec in &data.records {
        let mut row = vec![number(rec.weight)];
        row.extend(rec.x.iter().copied().map(number));
        row.extend(rec.y.iter().copied().map(number));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn write_counts_csv(path: &Path, counts: &[Vec<f64>]) -> Result<(), Failure> {
    let mut w = WriterBuilder::new()
        .from_path(path)
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Failure::Data(format!("cannot write {}: {e}", path.display()));
    for row in counts {
        let cells: Vec<String> = row.iter().copied().map(number).collect();
        w.write_record(&cells).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}
