#pragma once

// Minimal zstd entry points. Uses the real header when present; otherwise
// declares the stable one-shot API exported by libzstd.so.1.

#if __has_include(<zstd.h>)
#include <zstd.h>
#else
#include <cstddef>

extern "C" {
std::size_t ZSTD_compress(void* dst, std::size_t dst_capacity, const void* src,
                          std::size_t src_size, int compression_level);
std::size_t ZSTD_decompress(void* dst, std::size_t dst_capacity, const void* src,
                            std::size_t compressed_size);
std::size_t ZSTD_compressBound(std::size_t src_size);
unsigned ZSTD_isError(std::size_t code);
unsigned long long ZSTD_getFrameContentSize(const void* src, std::size_t src_size);
}

#define ZSTD_CONTENTSIZE_UNKNOWN (0ULL - 1)
#define ZSTD_CONTENTSIZE_ERROR (0ULL - 2)
#endif
