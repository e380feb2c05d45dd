#pragma once

#include <memory>
#include <vector>

namespace redf {

// Flat row-major index maps used by the gather op to rearrange windows into
// patch grids. Sources:
//   - spectral pair concatenated to (C, 2L): element (c, j) at c*2L + j
//   - time window (C, L): element (c, j) at c*L + j
// Layouts produced:
//   - inter grid (N*C, 2p): row i*C + c holds patch i of channel c
//   - intra grid (C*N, 2p): row c*N + i holds patch i of channel c
//   - time grid  (C*N, p)

using IndexMap = std::shared_ptr<const std::vector<long>>;

IndexMap freq_patch_map_inter(int channels, int length, int patch, int stride);
IndexMap freq_patch_map_intra(int channels, int length, int patch, int stride);
IndexMap time_patch_map(int channels, int length, int patch, int stride);

// (N*C, D) patch-major rows -> (C*N, D) channel-major rows
IndexMap inter_to_intra_map(int patches, int channels, int dim);

}  // namespace redf
