/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SLIMNECK_H
#define SLIMNECK_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Loss selector for [`sn_bbox_loss`] and [`sn_bbox_loss_grad`], passed as
 its integer value.
 */
typedef enum SnLossKind {
  SN_LOSS_KIND_IOU = 0,
  SN_LOSS_KIND_GIOU = 1,
  SN_LOSS_KIND_DIOU = 2,
  SN_LOSS_KIND_CIOU = 3,
  SN_LOSS_KIND_EIOU = 4,
} SnLossKind;

/*
 Result codes.
 */
typedef enum SnStatus {
  SN_STATUS_OK = 0,
  SN_STATUS_NULL_POINTER = 1,
  SN_STATUS_INVALID_ARGUMENT = 2,
  SN_STATUS_PARSE = 3,
  SN_STATUS_VALIDATION = 4,
  SN_STATUS_SHAPE = 5,
  SN_STATUS_MISSING_WEIGHT = 6,
  SN_STATUS_FORMAT = 7,
  SN_STATUS_IO = 8,
  SN_STATUS_PANIC = 9,
} SnStatus;

/*
 Parsed and shape-checked network description.
 */
typedef struct SnGraph SnGraph;

/*
 NCHW float tensor.
 */
typedef struct SnTensor SnTensor;

/*
 Named parameter tensors.
 */
typedef struct SnWeights SnWeights;

/*
 Axis-aligned box: center, width, height.
 */
typedef struct SnBox {
  double cx;
  double cy;
  double w;
  double h;
} SnBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static string.
 */
const char *sn_version(void);

/*
 Message of the most recent failure on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *sn_last_error(void);

/*
 # Safety
 `s` is NULL or a string returned by this library and not yet freed.
 */
void sn_string_free(char *s);

/*
 Copies `len` floats (which must equal n*c*h*w) into a new tensor.

 # Safety
 `data` points to `len` readable floats; `out_tensor` is writable.
 */
enum SnStatus sn_tensor_new(size_t n,
                            size_t c,
                            size_t h,
                            size_t w,
                            const float *data,
                            size_t len,
                            struct SnTensor **out_tensor);

/*
 # Safety
 `t` is NULL or a live tensor handle.
 */
void sn_tensor_free(struct SnTensor *t);

/*
 Writes n, c, h, w into `dims`.

 # Safety
 `t` is a live tensor handle; `dims` has room for 4 values.
 */
enum SnStatus sn_tensor_shape(const struct SnTensor *t, size_t *dims);

/*
 Borrows the tensor's buffer. The pointer is valid while `t` is alive.

 # Safety
 `t` is a live tensor handle; `data` and `len` are writable.
 */
enum SnStatus sn_tensor_data(const struct SnTensor *t, const float **data, size_t *len);

/*
 Hex SHA-256 of the shape and data; free with [`sn_string_free`].

 # Safety
 `t` is a live tensor handle; `out_hex` is writable.
 */
enum SnStatus sn_tensor_checksum(const struct SnTensor *t, char **out_hex);

/*
 Reads an `.ntsr` file.

 # Safety
 `path` is a NUL-terminated string; `out_tensor` is writable.
 */
enum SnStatus sn_tensor_read(const char *path, struct SnTensor **out_tensor);

/*
 Writes an `.ntsr` file.

 # Safety
 `t` is a live tensor handle; `path` is a NUL-terminated string.
 */
enum SnStatus sn_tensor_write(const struct SnTensor *t, const char *path);

/*
 Parses spec text.

 # Safety
 `spec` is a NUL-terminated string; `out_graph` is writable.
 */
enum SnStatus sn_graph_parse(const char *spec, struct SnGraph **out_graph);

/*
 Reads and parses a `.spec` file.

 # Safety
 `path` is a NUL-terminated string; `out_graph` is writable.
 */
enum SnStatus sn_graph_load(const char *path, struct SnGraph **out_graph);

/*
 # Safety
 `g` is NULL or a live graph handle.
 */
void sn_graph_free(struct SnGraph *g);

/*
 Writes the declared input n, c, h, w into `dims`.

 # Safety
 `g` is a live graph handle; `dims` has room for 4 values.
 */
enum SnStatus sn_graph_input_shape(const struct SnGraph *g, size_t *dims);

/*
 Copy of `g` with a different input shape, shapes re-propagated.

 # Safety
 `g` is a live graph handle; `out_graph` is writable.
 */
enum SnStatus sn_graph_with_input(const struct SnGraph *g,
                                  size_t n,
                                  size_t c,
                                  size_t h,
                                  size_t w,
                                  struct SnGraph **out_graph);

/*
 Number of declared outputs.

 # Safety
 `g` is a live graph handle; `count` is writable.
 */
enum SnStatus sn_graph_output_count(const struct SnGraph *g, size_t *count);

/*
 Name of declared output `index`; free with [`sn_string_free`].

 # Safety
 `g` is a live graph handle; `out_name` is writable.
 */
enum SnStatus sn_graph_output_name(const struct SnGraph *g, size_t index, char **out_name);

/*
 Total parameter count and MACs per sample.

 # Safety
 `g` is a live graph handle; `params` and `flops` are writable.
 */
enum SnStatus sn_graph_cost(const struct SnGraph *g, uint64_t *params, uint64_t *flops);

/*
 Per-layer cost report as CSV; free with [`sn_string_free`].

 # Safety
 `g` is a live graph handle; `out_csv` is writable.
 */
enum SnStatus sn_graph_cost_csv(const struct SnGraph *g, char **out_csv);

/*
 Seeded initialization of every parameter of `g`.

 # Safety
 `g` is a live graph handle; `out_weights` is writable.
 */
enum SnStatus sn_weights_init(const struct SnGraph *g,
                              uint64_t seed,
                              struct SnWeights **out_weights);

/*
 Reads an `.nwts` file.

 # Safety
 `path` is a NUL-terminated string; `out_weights` is writable.
 */
enum SnStatus sn_weights_load(const char *path, struct SnWeights **out_weights);

/*
 Writes an `.nwts` file.

 # Safety
 `w` is a live weights handle; `path` is a NUL-terminated string.
 */
enum SnStatus sn_weights_save(const struct SnWeights *w, const char *path);

/*
 Checks that `w` holds every tensor `g` needs, with matching shapes.

 # Safety
 `w` and `g` are live handles.
 */
enum SnStatus sn_weights_validate(const struct SnWeights *w, const struct SnGraph *g);

/*
 # Safety
 `w` is NULL or a live weights handle.
 */
void sn_weights_free(struct SnWeights *w);

/*
 Input of the graph's declared shape drawn uniformly from [-1, 1).

 # Safety
 `g` is a live graph handle; `out_tensor` is writable.
 */
enum SnStatus sn_random_input(const struct SnGraph *g, uint64_t seed, struct SnTensor **out_tensor);

/*
 Runs `g` on `x` and returns the value of `layer`, or of the first
 declared output when `layer` is NULL.

 # Safety
 `g`, `w`, `x` are live handles; `layer` is NULL or a NUL-terminated
 string; `out_tensor` is writable.
 */
enum SnStatus sn_forward(const struct SnGraph *g,
                         const struct SnWeights *w,
                         const struct SnTensor *x,
                         const char *layer,
                         struct SnTensor **out_tensor);

/*
 Loss of `pred` against `gt`; `kind` is an [`SnLossKind`] value.

 # Safety
 `pred` and `gt` point to boxes; `value` is writable.
 */
enum SnStatus sn_bbox_loss(int32_t kind,
                           const struct SnBox *pred,
                           const struct SnBox *gt,
                           double *value);

/*
 Loss and its gradient with respect to the prediction's (cx, cy, w, h).
 `perturbed`, when not NULL, reports whether the prediction was nudged off
 an edge coincidence before differentiating.

 # Safety
 `pred` and `gt` point to boxes; `value` is writable; `grad` has room for
 4 values; `perturbed` is NULL or writable.
 */
enum SnStatus sn_bbox_loss_grad(int32_t kind,
                                const struct SnBox *pred,
                                const struct SnBox *gt,
                                double *value,
                                double *grad,
                                bool *perturbed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLIMNECK_H */
