#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segfield/prompts.hpp"
#include "segfield/scene_model.hpp"

namespace segfield {

/// mask = S(image, prompts).
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual Mask segment(const ViewImage& view, const PromptSet& prompts) = 0;
};

/// Text-conditioned detector returning boxes sorted by descending score.
class BoxDetector {
 public:
  virtual ~BoxDetector() = default;
  virtual std::vector<ScoredBox> detect_boxes(const ViewImage& view, const std::string& text) = 0;
};

class SegmentationBackend : public Segmenter, public BoxDetector {};

/// Ground-truth backed segmenter and detector over per-view instance maps.
class OracleBackend final : public SegmentationBackend {
 public:
  OracleBackend(std::map<int, InstanceMap> instances, std::map<std::string, int> labels = {},
                int boundary_px = 0);

  Mask segment(const ViewImage& view, const PromptSet& prompts) override;
  std::vector<ScoredBox> detect_boxes(const ViewImage& view, const std::string& text) override;

 private:
  const InstanceMap& instances_for(const ViewImage& view) const;

  std::map<int, InstanceMap> instances_;
  std::map<std::string, int> labels_;
  int boundary_px_;
};

// ---------------------------------------------------------------- wire format

/// Uncompressed run-length mask over the row-major pixel order; counts
/// alternate starting with a run of zeros (possibly of length 0).
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;
  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask encode_rle(const BitMask& mask);
/// Throws Errc::protocol when the runs do not cover height * width exactly.
BitMask decode_rle(const RleMask& rle);
nlohmann::json rle_to_json(const RleMask& rle);
RleMask rle_from_json(const nlohmann::json& j);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

constexpr int kProtocolVersion = 1;

nlohmann::json make_hello_request(std::int64_t id);
nlohmann::json make_segment_request(std::int64_t id, const ViewImage& view,
                                    const PromptSet& prompts);
nlohmann::json make_detect_request(std::int64_t id, const ViewImage& view,
                                   const std::string& text);

// ---------------------------------------------------------------- transport

using Clock = std::chrono::steady_clock;

/// Newline-delimited message channel.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void send_line(const std::string& line, Clock::time_point deadline) = 0;
  virtual std::string receive_line(Clock::time_point deadline) = 0;
};

/// Opens "tcp://host:port", "unix:/path" or "exec:<shell command>" (stdio
/// subprocess). Failures raise Errc::transport.
std::unique_ptr<LineChannel> open_channel(const std::string& endpoint,
                                          Clock::time_point deadline);

enum class BackendKind { oracle, bridge };

struct SegmenterHandle {
  BackendKind backend = BackendKind::oracle;
  std::optional<std::string> endpoint;
  std::chrono::milliseconds timeout{30000};

  void validate() const;
};

/// Client for the external bridge service. Requests are serialized: one in
/// flight per client. Connects lazily and performs the hello handshake first.
class BridgeClient final : public SegmentationBackend {
 public:
  explicit BridgeClient(const SegmenterHandle& handle);

  Mask segment(const ViewImage& view, const PromptSet& prompts) override;
  std::vector<ScoredBox> detect_boxes(const ViewImage& view, const std::string& text) override;

 private:
  nlohmann::json round_trip(const nlohmann::json& request, Clock::time_point deadline);
  void ensure_connected(Clock::time_point deadline);

  std::string endpoint_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<LineChannel> channel_;
  std::int64_t next_id_ = 1;
  std::mutex mutex_;
};

/// Oracle handles need the instance maps and label table; bridge handles ignore them.
std::unique_ptr<SegmentationBackend> make_backend(const SegmenterHandle& handle,
                                                  std::map<int, InstanceMap> instances = {},
                                                  std::map<std::string, int> labels = {});

}  // namespace segfield
