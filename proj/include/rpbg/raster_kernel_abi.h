/* C boundary between the reference rasterizer and an accelerated kernel
 * shipped as a shared library. All buffers are caller-owned. */
#ifndef RPBG_RASTER_KERNEL_ABI_H
#define RPBG_RASTER_KERNEL_ABI_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define RPBG_RASTER_ABI_VERSION 1u

enum {
    RPBG_RASTER_OK = 0,
    RPBG_RASTER_BAD_LENGTH = 1,
    RPBG_RASTER_BAD_ARGUMENT = 2,
};

typedef uint32_t (*rpbg_raster_abi_version_fn)(void);

/*
 * positions:    3*n_points float32, xyz interleaved
 * intrinsics:   fx, fy, cx, cy at full resolution (float64)
 * width/height: full-resolution sensor size
 * rotation:     row-major 3x3 world->camera (float64); translation: 3 (float64)
 * index_out:    ceil(h/2^s)*ceil(w/2^s) int32, -1 for empty pixels
 * depth_out:    same length float32, 0 for empty pixels
 * Level intrinsics are (float)(k * 2^-scale); projection follows the
 * reference operation order so results are bit-identical.
 */
typedef int32_t (*rpbg_rasterize_scale_fn)(const float* positions, uint64_t positions_len, const double* intrinsics,
                                           int32_t width, int32_t height, const double* rotation,
                                           const double* translation, int32_t scale, int32_t* index_out,
                                           float* depth_out, uint64_t out_len);

#define RPBG_RASTER_VERSION_SYMBOL "rpbg_raster_abi_version"
#define RPBG_RASTER_SCALE_SYMBOL "rpbg_rasterize_scale_fast"

#ifdef __cplusplus
}
#endif

#endif
