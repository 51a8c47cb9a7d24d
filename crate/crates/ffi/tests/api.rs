use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use slimneck_ffi::*;

fn toy() -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/specs/slimneck_v5_toy.spec");
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = sn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    sn_string_free(p);
    s
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(sn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn toy_forward_matches_golden() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(sn_graph_load(toy().as_ptr(), &mut g), SnStatus::Ok);
        let mut dims = [0usize; 4];
        assert_eq!(sn_graph_input_shape(g, dims.as_mut_ptr()), SnStatus::Ok);
        assert_eq!(dims, [1, 3, 64, 64]);
        let mut count = 0;
        assert_eq!(sn_graph_output_count(g, &mut count), SnStatus::Ok);
        assert_eq!(count, 3);
        let mut name = ptr::null_mut();
        assert_eq!(sn_graph_output_name(g, 2, &mut name), SnStatus::Ok);
        assert_eq!(take_string(name), "out5");
        assert_eq!(sn_graph_output_name(g, 3, &mut name), SnStatus::InvalidArgument);

        let (mut w, mut x, mut y) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(sn_weights_init(g, 0, &mut w), SnStatus::Ok);
        assert_eq!(sn_weights_validate(w, g), SnStatus::Ok);
        assert_eq!(sn_random_input(g, 0, &mut x), SnStatus::Ok);
        assert_eq!(sn_forward(g, w, x, ptr::null(), &mut y), SnStatus::Ok);
        let mut hex = ptr::null_mut();
        assert_eq!(sn_tensor_checksum(y, &mut hex), SnStatus::Ok);
        assert_eq!(
            take_string(hex),
            "45c9f198039fa9d3924770a29eb0887264953506464c3fda4e44949a48bc05bf"
        );
        assert_eq!(sn_tensor_shape(y, dims.as_mut_ptr()), SnStatus::Ok);
        assert_eq!(dims, [1, 32, 8, 8]);
        sn_tensor_free(y);

        let layer = CString::new("nope").unwrap();
        assert_eq!(sn_forward(g, w, x, layer.as_ptr(), &mut y), SnStatus::InvalidArgument);
        assert!(last_error().contains("nope"));

        let (mut params, mut flops) = (0u64, 0u64);
        assert_eq!(sn_graph_cost(g, &mut params, &mut flops), SnStatus::Ok);
        assert_eq!((params, flops), (255_260, 2_758_976));
        let mut csv = ptr::null_mut();
        assert_eq!(sn_graph_cost_csv(g, &mut csv), SnStatus::Ok);
        assert!(take_string(csv).starts_with("name,type,in_shape,out_shape,params,flops,pct_of_total\n"));

        sn_tensor_free(x);
        sn_weights_free(w);
        sn_graph_free(g);
    }
}

#[test]
fn tensors_and_weights_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let tpath = CString::new(dir.path().join("t.ntsr").to_str().unwrap()).unwrap();
    let wpath = CString::new(dir.path().join("w.nwts").to_str().unwrap()).unwrap();
    unsafe {
        let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
        let mut t = ptr::null_mut();
        assert_eq!(
            sn_tensor_new(1, 3, 2, 2, data.as_ptr(), data.len(), &mut t),
            SnStatus::Ok
        );
        assert_eq!(sn_tensor_write(t, tpath.as_ptr()), SnStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(sn_tensor_read(tpath.as_ptr(), &mut back), SnStatus::Ok);
        let (mut p, mut len) = (ptr::null(), 0usize);
        assert_eq!(sn_tensor_data(back, &mut p, &mut len), SnStatus::Ok);
        assert_eq!(std::slice::from_raw_parts(p, len), &data[..]);
        assert_eq!(sn_tensor_new(1, 3, 2, 2, data.as_ptr(), 11, &mut t), SnStatus::Shape);
        sn_tensor_free(t);
        sn_tensor_free(back);

        let mut g = ptr::null_mut();
        assert_eq!(sn_graph_load(toy().as_ptr(), &mut g), SnStatus::Ok);
        let mut w = ptr::null_mut();
        assert_eq!(sn_weights_init(g, 7, &mut w), SnStatus::Ok);
        assert_eq!(sn_weights_save(w, wpath.as_ptr()), SnStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(sn_weights_load(wpath.as_ptr(), &mut loaded), SnStatus::Ok);
        assert_eq!(sn_weights_validate(loaded, g), SnStatus::Ok);

        let mut small = ptr::null_mut();
        let spec = CString::new("input 1 4 8 8\nlayer conv name=c in=input out_c=2\noutput c\n").unwrap();
        assert_eq!(sn_graph_parse(spec.as_ptr(), &mut small), SnStatus::Ok);
        assert_eq!(sn_weights_validate(loaded, small), SnStatus::MissingWeight);
        let mut wide = ptr::null_mut();
        assert_eq!(sn_graph_with_input(small, 2, 4, 16, 16, &mut wide), SnStatus::Ok);
        let mut dims = [0usize; 4];
        sn_graph_input_shape(wide, dims.as_mut_ptr());
        assert_eq!(dims, [2, 4, 16, 16]);

        for h in [small, wide, g] {
            sn_graph_free(h);
        }
        sn_weights_free(w);
        sn_weights_free(loaded);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut g = ptr::null_mut();
        let bad = CString::new("input 1 3 8 8\nlayer conv name=c in=ghost\noutput c\n").unwrap();
        assert_eq!(sn_graph_parse(bad.as_ptr(), &mut g), SnStatus::Parse);
        assert!(g.is_null());
        assert!(last_error().contains("line 2"));
        assert_eq!(sn_graph_parse(ptr::null(), &mut g), SnStatus::NullPointer);
        let missing = CString::new("/nonexistent/w.nwts").unwrap();
        let mut w = ptr::null_mut();
        assert_eq!(sn_weights_load(missing.as_ptr(), &mut w), SnStatus::Io);
        assert_eq!(
            sn_graph_cost(ptr::null(), ptr::null_mut(), ptr::null_mut()),
            SnStatus::NullPointer
        );
    }
}

#[test]
fn bbox_losses() {
    let pred = SnBox {
        cx: 0.5,
        cy: 0.5,
        w: 1.0,
        h: 1.0,
    };
    let gt = SnBox {
        cx: 2.5,
        cy: 0.5,
        w: 1.0,
        h: 1.0,
    };
    let expect = [1.0, 4.0 / 3.0, 1.4, 1.4, 1.4];
    unsafe {
        for (kind, want) in [
            SnLossKind::Iou,
            SnLossKind::Giou,
            SnLossKind::Diou,
            SnLossKind::Ciou,
            SnLossKind::Eiou,
        ]
        .into_iter()
        .zip(expect)
        {
            let mut v = 0.0;
            assert_eq!(sn_bbox_loss(kind as i32, &pred, &gt, &mut v), SnStatus::Ok);
            assert!((v - want).abs() < 1e-9, "{kind:?}");
        }
        let (mut v, mut grad, mut nudged) = (0.0, [0.0; 4], true);
        let near = SnBox {
            cx: 2.0,
            cy: 0.7,
            w: 1.3,
            h: 0.8,
        };
        assert_eq!(
            sn_bbox_loss_grad(
                SnLossKind::Diou as i32,
                &near,
                &gt,
                &mut v,
                grad.as_mut_ptr(),
                &mut nudged
            ),
            SnStatus::Ok
        );
        assert!(!nudged && v > 0.0 && grad[0] < 0.0);
        assert_eq!(sn_bbox_loss(9, &pred, &gt, &mut v), SnStatus::InvalidArgument);
        let flat = SnBox { w: 0.0, ..pred };
        assert_eq!(sn_bbox_loss(0, &flat, &gt, &mut v), SnStatus::InvalidArgument);
    }
}
