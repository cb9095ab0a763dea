#pragma once

#include "ec/image.hpp"
#include "ec/types.hpp"

namespace ec {

/// Square tiles of side `cell`, laid out row-major from the top-left. Tiles on
/// the right and bottom edges are clipped to the image. Labels follow tile order.
SegmentMap grid_segment(const Image& image, int cell);

/// SLIC superpixels: k-means in joint color/position space seeded on a regular
/// grid with spacing S = sqrt(N / n_segments). The assignment distance is
/// d_color + (compactness / S) * d_xy. A final connectivity pass merges every
/// disconnected island of a label into its largest adjacent segment.
///
/// Color differences are measured on intensities scaled to [0, 100] in the
/// image's native channels (no Lab conversion). Never returns more than
/// n_segments segments.
SegmentMap slic_segment(const Image& image, int n_segments, double compactness, int iterations);

/// Quick shift: Gaussian density estimate (bandwidth kernel_size, window
/// ceil(3 * kernel_size)) over features (ratio * 100 * color, x, y); each
/// pixel links to its nearest neighbor of higher density within max_dist and
/// the roots of the resulting forest become segments. Density ties are broken
/// by raster index so the forest is always well defined.
SegmentMap quickshift_segment(const Image& image, double kernel_size, double max_dist, double ratio);

/// Dispatches on the parameter variant after validating it.
SegmentMap segment(const Image& image, const SegmentationParams& params);

/// Relabels every 4-connected island of a label that is not the label's
/// largest component into the largest adjacent segment, then renumbers the
/// labels contiguously.
SegmentMap enforce_connectivity(const SegmentMap& segmap);

}  // namespace ec
