#include "redf/patching.hpp"

#include "redf/config.hpp"

namespace redf {

namespace {
long freq_src(int c, int j, bool imag, int length) {
  return static_cast<long>(c) * (2L * length) + (imag ? length : 0) + j;
}
}  // namespace

IndexMap freq_patch_map_inter(int channels, int length, int patch, int stride) {
  int n = patch_count(length, patch, stride);
  auto idx = std::make_shared<std::vector<long>>();
  idx->reserve(static_cast<size_t>(n) * channels * 2 * patch);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c) {
      for (int k = 0; k < patch; ++k) idx->push_back(freq_src(c, i * stride + k, false, length));
      for (int k = 0; k < patch; ++k) idx->push_back(freq_src(c, i * stride + k, true, length));
    }
  return idx;
}

IndexMap freq_patch_map_intra(int channels, int length, int patch, int stride) {
  int n = patch_count(length, patch, stride);
  auto idx = std::make_shared<std::vector<long>>();
  idx->reserve(static_cast<size_t>(n) * channels * 2 * patch);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < patch; ++k) idx->push_back(freq_src(c, i * stride + k, false, length));
      for (int k = 0; k < patch; ++k) idx->push_back(freq_src(c, i * stride + k, true, length));
    }
  return idx;
}

IndexMap time_patch_map(int channels, int length, int patch, int stride) {
  int n = patch_count(length, patch, stride);
  auto idx = std::make_shared<std::vector<long>>();
  idx->reserve(static_cast<size_t>(n) * channels * patch);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < patch; ++k) idx->push_back(static_cast<long>(c) * length + i * stride + k);
  return idx;
}

IndexMap inter_to_intra_map(int patches, int channels, int dim) {
  auto idx = std::make_shared<std::vector<long>>();
  idx->reserve(static_cast<size_t>(patches) * channels * dim);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < patches; ++i)
      for (int k = 0; k < dim; ++k)
        idx->push_back((static_cast<long>(i) * channels + c) * dim + k);
  return idx;
}

}  // namespace redf
