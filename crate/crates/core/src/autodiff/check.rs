use super::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};

/// Worst disagreement between reverse-mode and central-difference gradients.
#[derive(Clone, Debug)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub components: usize,
}

/// Compares [`Graph::backward`] against `(f(p+h) − f(p−h)) / 2h` for every trainable component.
///
/// Relative errors use `max(|analytic|, |numeric|, floor)` with `floor = 1e4·ε·max(|f|, 1)/h`,
/// the magnitude below which the central difference cannot resolve four digits.
pub fn finite_difference_check(graph: &mut Graph, sources: &[&ParamStore], loss: NodeId, h: f64) -> Result<FdReport> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Usage(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    let names = graph.trainable_names();
    let mut work = ParamStore::new();
    for n in &names {
        let t = sources
            .iter()
            .find_map(|s| s.get(n))
            .ok_or_else(|| Error::config(format!("parameter `{n}` is not bound")))?;
        work.insert(n.clone(), t.clone());
    }
    let f0 = eval(graph, &work, sources, loss)?;
    let floor = (1e4 * f64::EPSILON * f0.abs().max(1.0) / h).max(1e-8);
    let grads = graph.backward(loss)?;
    let mut report = FdReport { max_rel_error: 0.0, worst_param: String::new(), worst_index: 0, components: 0 };
    for n in &names {
        let len = work.require(n)?.len();
        for i in 0..len {
            let orig = work.require(n)?.data()[i];
            work.get_mut(n).unwrap().data_mut()[i] = orig + h;
            let fp = eval(graph, &work, sources, loss)?;
            work.get_mut(n).unwrap().data_mut()[i] = orig - h;
            let fm = eval(graph, &work, sources, loss)?;
            work.get_mut(n).unwrap().data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grads[n].data()[i];
            let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(floor);
            report.components += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = n.clone();
                report.worst_index = i;
            }
        }
    }
    eval(graph, &work, sources, loss)?;
    Ok(report)
}

fn eval(graph: &mut Graph, work: &ParamStore, sources: &[&ParamStore], loss: NodeId) -> Result<f64> {
    let chain: Vec<&ParamStore> = std::iter::once(work).chain(sources.iter().copied()).collect();
    graph.forward(&chain)?;
    graph.scalar(loss)
}
