use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a metric trace; `test_l2re` is NaN when there is no test split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub train_loss: f64,
    pub test_l2re: f64,
}

/// `step,train_loss,test_l2re` with a header line.
pub fn write_trace_csv<W: Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn trace_to_csv(rows: &[TraceRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}
