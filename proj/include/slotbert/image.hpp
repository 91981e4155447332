#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slotbert {

struct ImageU8 {
    int h = 0, w = 0, channels = 0; // channels: 1 (gray) or 3 (rgb)
    std::vector<uint8_t> pixels;    // row-major h*w*channels

    uint8_t at(int r, int c, int ch = 0) const {
        return pixels[static_cast<size_t>((r * w + c) * channels + ch)];
    }
    uint8_t& at(int r, int c, int ch = 0) {
        return pixels[static_cast<size_t>((r * w + c) * channels + ch)];
    }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

uint32_t crc32_of_file(const std::string& path);

} // namespace slotbert
