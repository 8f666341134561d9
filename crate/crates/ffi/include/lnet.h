#ifndef LNET_H
#define LNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define LNET_OK 0

#define LNET_ERR_NULL 1

#define LNET_ERR_INVALID_INPUT 2

#define LNET_ERR_CONFIG 3

#define LNET_ERR_GEOMETRY 4

#define LNET_ERR_NOT_VERIFIED 5

#define LNET_ERR_INDEX 6

#define LNET_ERR_NUMERIC 7

#define LNET_ERR_IO 8

#define LNET_ERR_PARSE 9

#define LNET_ERR_PANIC 10

/**
 * A discrete L-net.
 */
typedef struct LnetNet LnetNet;

/**
 * A B-spline surface.
 */
typedef struct LnetSurface LnetSurface;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lnet_last_error(void);

/**
 * Library version as a static string.
 */
const char *lnet_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void lnet_string_free(char *s);

/**
 * Creates the built-in elliptic cap surface.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
int32_t lnet_surface_builtin(struct LnetSurface **out);

/**
 * Parses a surface from its JSON file format.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for a write.
 */
int32_t lnet_surface_from_json(const char *json, struct LnetSurface **out);

/**
 * # Safety
 * `s` must be null or a handle from this library, not yet freed.
 */
void lnet_surface_free(struct LnetSurface *s);

/**
 * Evaluates the surface point at `(u, v)` into `point[3]`.
 *
 * # Safety
 * `s` must be a live handle; `point` must hold 3 doubles.
 */
int32_t lnet_surface_point(const struct LnetSurface *s, double u, double v, double *point);

/**
 * Principal frame at `(u, v)`: unit principal directions `t1[3]`, `t2[3]`,
 * normal `n[3]` and curvatures `kappa[2]` with `kappa[0] >= kappa[1]`.
 *
 * # Safety
 * `s` must be a live handle; output arrays must have the stated sizes.
 */
int32_t lnet_surface_frame(const struct LnetSurface *s,
                           double u,
                           double v,
                           double *t1,
                           double *t2,
                           double *n,
                           double *kappa);

/**
 * Runs the pipeline in memory from a JSON run config and returns the
 * optimized net. Nothing is written to disk.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be valid for a write.
 */
int32_t lnet_run(const char *config_json, struct LnetNet **out);

/**
 * Parses a net from its JSON file format.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for a write.
 */
int32_t lnet_net_from_json(const char *json, struct LnetNet **out);

/**
 * Serializes a net to JSON. Release the string with [`lnet_string_free`].
 *
 * # Safety
 * `net` must be a live handle; `out` must be valid for a write.
 */
int32_t lnet_net_to_json(const struct LnetNet *net, char **out);

/**
 * # Safety
 * `net` must be null or a handle from this library, not yet freed.
 */
void lnet_net_free(struct LnetNet *net);

/**
 * Face counts of the net.
 *
 * # Safety
 * `net` must be a live handle; `rows` and `cols` must be valid for writes.
 */
int32_t lnet_net_faces(const struct LnetNet *net, size_t *rows, size_t *cols);

/**
 * Sphere of face `(i, j)`: `center[3]` and signed `radius`.
 *
 * # Safety
 * `net` must be a live handle; outputs must be valid for writes.
 */
int32_t lnet_net_sphere(const struct LnetNet *net,
                        size_t i,
                        size_t j,
                        double *center,
                        double *radius);

/**
 * Plane of vertex `(i, j)`: `normal[3]` and `intercept`.
 *
 * # Safety
 * `net` must be a live handle; outputs must be valid for writes.
 */
int32_t lnet_net_plane(const struct LnetNet *net,
                       size_t i,
                       size_t j,
                       double *normal,
                       double *intercept);

/**
 * Checks contact within `tol` and cone admissibility.
 *
 * # Safety
 * `net` must be a live handle; outputs must be valid for writes.
 */
int32_t lnet_net_verify(const struct LnetNet *net,
                        double tol,
                        double *max_contact_residual,
                        size_t *inadmissible_edges,
                        bool *is_lnet);

/**
 * Tessellates a verified net and writes it as OBJ to `path`.
 *
 * # Safety
 * `net` must be a live handle; `path` must be a NUL-terminated string.
 */
int32_t lnet_net_write_obj(const struct LnetNet *net,
                           size_t arc_samples,
                           size_t ruling_samples,
                           const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LNET_H */
