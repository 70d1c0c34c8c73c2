#pragma once

#include <cstdint>
#include <vector>

namespace sawspe {

/// One time-tagged detection event.
struct PhotonRecord {
    std::uint32_t channel = 0;
    std::uint64_t time_ps = 0;

    friend bool operator==(const PhotonRecord&, const PhotonRecord&) = default;
};

using PhotonStream = std::vector<PhotonRecord>;

}  // namespace sawspe
