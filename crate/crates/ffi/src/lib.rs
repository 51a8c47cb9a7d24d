//! C ABI for slimneck.
//!
//! Every fallible function returns an [`SnStatus`]. On failure a message is
//! kept per thread and read back with [`sn_last_error`]; output parameters
//! are written only on success. Tensors, graphs and weight stores are opaque
//! handles released with their `*_free` function. Strings returned through
//! `char **` outputs are owned by the caller and released with
//! [`sn_string_free`].
//!
//! Panics never cross the boundary: they are reported as
//! `SN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use slimneck::cost::graph_cost;
use slimneck::graph::{
    forward, init_weights, load_weights, parse_spec, random_input, save_weights, GraphSpec, WeightStore,
};
use slimneck::loss::{loss, loss_grad, BBox, LossKind};
use slimneck::tensor::{read_tensor_file, write_tensor_file};
use slimneck::{Error, Shape, Tensor};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Shape = 5,
    MissingWeight = 6,
    Format = 7,
    Io = 8,
    Panic = 9,
}

/// Loss selector for [`sn_bbox_loss`] and [`sn_bbox_loss_grad`], passed as
/// its integer value.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnLossKind {
    Iou = 0,
    Giou = 1,
    Diou = 2,
    Ciou = 3,
    Eiou = 4,
}

/// Axis-aligned box: center, width, height.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// NCHW float tensor.
pub struct SnTensor(Tensor);

/// Parsed and shape-checked network description.
pub struct SnGraph(GraphSpec);

/// Named parameter tensors.
pub struct SnWeights(WeightStore);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => SnStatus::Shape,
            Error::Degenerate(_) | Error::Invalid(_) => SnStatus::InvalidArgument,
            Error::Parse { .. } => SnStatus::Parse,
            Error::Validation { .. } => SnStatus::Validation,
            Error::MissingWeight(_) => SnStatus::MissingWeight,
            Error::Format(_) => SnStatus::Format,
            Error::Io(_) => SnStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SnStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome<()>) -> SnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SnStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Outcome<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure(SnStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Outcome<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Failure(SnStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Outcome<&'a str> {
    CStr::from_ptr(get(p, what)?)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn c_string(s: String) -> Outcome<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| invalid("string contains a nul byte"))
}

fn shape_of(dims: [usize; 4]) -> Outcome<Shape> {
    if dims.contains(&0) {
        return Err(invalid(format!("dimensions must be positive, got {dims:?}")));
    }
    Ok(Shape::new(dims[0], dims[1], dims[2], dims[3]))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn sn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copies `len` floats (which must equal n*c*h*w) into a new tensor.
///
/// # Safety
/// `data` points to `len` readable floats; `out_tensor` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_tensor_new(
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: *const f32,
    len: usize,
    out_tensor: *mut *mut SnTensor,
) -> SnStatus {
    guard(|| {
        let slot = out(out_tensor, "out_tensor")?;
        let shape = shape_of([n, c, h, w])?;
        let values = slice::from_raw_parts(get(data, "data")?, len).to_vec();
        *slot = boxed(SnTensor(Tensor::new(shape, values)?));
        Ok(())
    })
}

/// # Safety
/// `t` is NULL or a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn sn_tensor_free(t: *mut SnTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Writes n, c, h, w into `dims`.
///
/// # Safety
/// `t` is a live tensor handle; `dims` has room for 4 values.
#[no_mangle]
pub unsafe extern "C" fn sn_tensor_shape(t: *const SnTensor, dims: *mut usize) -> SnStatus {
    guard(|| {
        let t = get(t, "t")?;
        out(dims, "dims")?;
        slice::from_raw_parts_mut(dims, 4).copy_from_slice(&t.0.shape().dims());
        Ok(())
    })
}

/// Borrows the tensor's buffer. The pointer is valid while `t` is alive.
///
/// # Safety
/// `t` is a live tensor handle; `data` and `len` are writable.
#[no_mangle]
pub unsafe extern "C" fn sn_tensor_data(t: *const SnTensor, data: *mut *const f32, len: *mut usize) -> SnStatus {
    guard(|| {
        let t = get(t, "t")?;
        let (d, l) = (out(data, "data")?, out(len, "len")?);
        *d = t.0.data().as_ptr();
        *l = t.0.data().len();
        Ok(())
    })
}

/// Hex SHA-256 of the shape and data; free with [`sn_string_free`].
///
/// # Safety
/// `t` is a live tensor handle; `out_hex` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_tensor_checksum(t: *const SnTensor, out_hex: *mut *mut c_char) -> SnStatus {
    guard(|| {
        let t = get(t, "t")?;
        *out(out_hex, "out_hex")? = c_string(t.0.checksum())?;
        Ok(())
    })
}

/// Reads an `.ntsr` file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out_tensor` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_tensor_read(path: *const c_char, out_tensor: *mut *mut SnTensor) -> SnStatus {
    guard(|| {
        let slot = out(out_tensor, "out_tensor")?;
        *slot = boxed(SnTensor(read_tensor_file(text(path, "path")?)?));
        Ok(())
    })
}

/// Writes an `.ntsr` file.
///
/// # Safety
/// `t` is a live tensor handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sn_tensor_write(t: *const SnTensor, path: *const c_char) -> SnStatus {
    guard(|| Ok(write_tensor_file(text(path, "path")?, &get(t, "t")?.0)?))
}

/// Parses spec text.
///
/// # Safety
/// `spec` is a NUL-terminated string; `out_graph` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_parse(spec: *const c_char, out_graph: *mut *mut SnGraph) -> SnStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        *slot = boxed(SnGraph(parse_spec(text(spec, "spec")?)?));
        Ok(())
    })
}

/// Reads and parses a `.spec` file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out_graph` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_load(path: *const c_char, out_graph: *mut *mut SnGraph) -> SnStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        let body = fs::read_to_string(text(path, "path")?).map_err(Error::from)?;
        *slot = boxed(SnGraph(parse_spec(&body)?));
        Ok(())
    })
}

/// # Safety
/// `g` is NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_free(g: *mut SnGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Writes the declared input n, c, h, w into `dims`.
///
/// # Safety
/// `g` is a live graph handle; `dims` has room for 4 values.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_input_shape(g: *const SnGraph, dims: *mut usize) -> SnStatus {
    guard(|| {
        let g = get(g, "g")?;
        out(dims, "dims")?;
        slice::from_raw_parts_mut(dims, 4).copy_from_slice(&g.0.input_shape().dims());
        Ok(())
    })
}

/// Copy of `g` with a different input shape, shapes re-propagated.
///
/// # Safety
/// `g` is a live graph handle; `out_graph` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_with_input(
    g: *const SnGraph,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    out_graph: *mut *mut SnGraph,
) -> SnStatus {
    guard(|| {
        let g = get(g, "g")?;
        let slot = out(out_graph, "out_graph")?;
        *slot = boxed(SnGraph(g.0.with_input(shape_of([n, c, h, w])?)?));
        Ok(())
    })
}

/// Number of declared outputs.
///
/// # Safety
/// `g` is a live graph handle; `count` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_output_count(g: *const SnGraph, count: *mut usize) -> SnStatus {
    guard(|| {
        *out(count, "count")? = get(g, "g")?.0.outputs().len();
        Ok(())
    })
}

/// Name of declared output `index`; free with [`sn_string_free`].
///
/// # Safety
/// `g` is a live graph handle; `out_name` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_output_name(g: *const SnGraph, index: usize, out_name: *mut *mut c_char) -> SnStatus {
    guard(|| {
        let g = get(g, "g")?;
        let slot = out(out_name, "out_name")?;
        let name =
            g.0.outputs()
                .get(index)
                .ok_or_else(|| invalid(format!("output index {index} out of range")))?;
        *slot = c_string(name.clone())?;
        Ok(())
    })
}

/// Total parameter count and MACs per sample.
///
/// # Safety
/// `g` is a live graph handle; `params` and `flops` are writable.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_cost(g: *const SnGraph, params: *mut u64, flops: *mut u64) -> SnStatus {
    guard(|| {
        let report = graph_cost(&get(g, "g")?.0)?;
        let (p, f) = (out(params, "params")?, out(flops, "flops")?);
        *p = report.total_params();
        *f = report.total_flops();
        Ok(())
    })
}

/// Per-layer cost report as CSV; free with [`sn_string_free`].
///
/// # Safety
/// `g` is a live graph handle; `out_csv` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_graph_cost_csv(g: *const SnGraph, out_csv: *mut *mut c_char) -> SnStatus {
    guard(|| {
        let report = graph_cost(&get(g, "g")?.0)?;
        *out(out_csv, "out_csv")? = c_string(report.to_csv())?;
        Ok(())
    })
}

/// Seeded initialization of every parameter of `g`.
///
/// # Safety
/// `g` is a live graph handle; `out_weights` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_weights_init(g: *const SnGraph, seed: u64, out_weights: *mut *mut SnWeights) -> SnStatus {
    guard(|| {
        let g = get(g, "g")?;
        *out(out_weights, "out_weights")? = boxed(SnWeights(init_weights(&g.0, seed)));
        Ok(())
    })
}

/// Reads an `.nwts` file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out_weights` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_weights_load(path: *const c_char, out_weights: *mut *mut SnWeights) -> SnStatus {
    guard(|| {
        let slot = out(out_weights, "out_weights")?;
        *slot = boxed(SnWeights(load_weights(text(path, "path")?)?));
        Ok(())
    })
}

/// Writes an `.nwts` file.
///
/// # Safety
/// `w` is a live weights handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sn_weights_save(w: *const SnWeights, path: *const c_char) -> SnStatus {
    guard(|| Ok(save_weights(&get(w, "w")?.0, text(path, "path")?)?))
}

/// Checks that `w` holds every tensor `g` needs, with matching shapes.
///
/// # Safety
/// `w` and `g` are live handles.
#[no_mangle]
pub unsafe extern "C" fn sn_weights_validate(w: *const SnWeights, g: *const SnGraph) -> SnStatus {
    guard(|| Ok(get(w, "w")?.0.validate(&get(g, "g")?.0)?))
}

/// # Safety
/// `w` is NULL or a live weights handle.
#[no_mangle]
pub unsafe extern "C" fn sn_weights_free(w: *mut SnWeights) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Input of the graph's declared shape drawn uniformly from [-1, 1).
///
/// # Safety
/// `g` is a live graph handle; `out_tensor` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_random_input(g: *const SnGraph, seed: u64, out_tensor: *mut *mut SnTensor) -> SnStatus {
    guard(|| {
        let g = get(g, "g")?;
        *out(out_tensor, "out_tensor")? = boxed(SnTensor(random_input(g.0.input_shape(), seed)));
        Ok(())
    })
}

/// Runs `g` on `x` and returns the value of `layer`, or of the first
/// declared output when `layer` is NULL.
///
/// # Safety
/// `g`, `w`, `x` are live handles; `layer` is NULL or a NUL-terminated
/// string; `out_tensor` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_forward(
    g: *const SnGraph,
    w: *const SnWeights,
    x: *const SnTensor,
    layer: *const c_char,
    out_tensor: *mut *mut SnTensor,
) -> SnStatus {
    guard(|| {
        let (g, w, x) = (get(g, "g")?, get(w, "w")?, get(x, "x")?);
        let slot = out(out_tensor, "out_tensor")?;
        let name = if layer.is_null() {
            g.0.outputs()
                .first()
                .cloned()
                .ok_or_else(|| invalid("graph declares no outputs"))?
        } else {
            text(layer, "layer")?.to_string()
        };
        let result = forward(&g.0, &w.0, &x.0)?;
        let t = result
            .into_tensor(&name)
            .ok_or_else(|| invalid(format!("unknown layer `{name}`")))?;
        *slot = boxed(SnTensor(t));
        Ok(())
    })
}

fn loss_kind(kind: i32) -> Outcome<LossKind> {
    let all = [
        SnLossKind::Iou,
        SnLossKind::Giou,
        SnLossKind::Diou,
        SnLossKind::Ciou,
        SnLossKind::Eiou,
    ];
    all.iter()
        .position(|k| *k as i32 == kind)
        .map(|i| LossKind::ALL[i])
        .ok_or_else(|| invalid(format!("unknown loss kind {kind}")))
}

fn bbox(b: &SnBox, what: &str) -> Outcome<BBox> {
    let ok = [b.cx, b.cy, b.w, b.h].iter().all(|v| v.is_finite()) && b.w > 0.0 && b.h > 0.0;
    if !ok {
        return Err(invalid(format!("`{what}` needs finite coordinates and positive size")));
    }
    Ok(BBox::new(b.cx, b.cy, b.w, b.h))
}

/// Loss of `pred` against `gt`; `kind` is an [`SnLossKind`] value.
///
/// # Safety
/// `pred` and `gt` point to boxes; `value` is writable.
#[no_mangle]
pub unsafe extern "C" fn sn_bbox_loss(kind: i32, pred: *const SnBox, gt: *const SnBox, value: *mut f64) -> SnStatus {
    guard(|| {
        let k = loss_kind(kind)?;
        let (p, g) = (bbox(get(pred, "pred")?, "pred")?, bbox(get(gt, "gt")?, "gt")?);
        *out(value, "value")? = loss(k, &p, &g);
        Ok(())
    })
}

/// Loss and its gradient with respect to the prediction's (cx, cy, w, h).
/// `perturbed`, when not NULL, reports whether the prediction was nudged off
/// an edge coincidence before differentiating.
///
/// # Safety
/// `pred` and `gt` point to boxes; `value` is writable; `grad` has room for
/// 4 values; `perturbed` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn sn_bbox_loss_grad(
    kind: i32,
    pred: *const SnBox,
    gt: *const SnBox,
    value: *mut f64,
    grad: *mut f64,
    perturbed: *mut bool,
) -> SnStatus {
    guard(|| {
        let k = loss_kind(kind)?;
        let (p, g) = (bbox(get(pred, "pred")?, "pred")?, bbox(get(gt, "gt")?, "gt")?);
        let v = out(value, "value")?;
        out(grad, "grad")?;
        let lg = loss_grad(k, &p, &g);
        *v = lg.value;
        slice::from_raw_parts_mut(grad, 4).copy_from_slice(&lg.grad);
        if let Some(flag) = perturbed.as_mut() {
            *flag = lg.perturbed;
        }
        Ok(())
    })
}
