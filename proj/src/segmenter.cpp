#include "segfield/segmenter.hpp"

#include <algorithm>

#include <openssl/evp.h>

#include "segfield/error.hpp"
#include "segfield/image_io.hpp"
#include "segfield/synthetic.hpp"

using nlohmann::json;

namespace segfield {

OracleBackend::OracleBackend(std::map<int, InstanceMap> instances,
                             std::map<std::string, int> labels, int boundary_px)
    : instances_(std::move(instances)), labels_(std::move(labels)), boundary_px_(boundary_px) {}

const InstanceMap& OracleBackend::instances_for(const ViewImage& view) const {
  const auto it = instances_.find(view.view_id);
  if (it == instances_.end()) {
    throw Error(Errc::integrity,
                "oracle has no instance map for view " + std::to_string(view.view_id));
  }
  if (!it->second.same_shape(view.intrinsics.width, view.intrinsics.height)) {
    throw Error(Errc::dimension_mismatch,
                "instance map size differs from view " + std::to_string(view.view_id));
  }
  return it->second;
}

Mask OracleBackend::segment(const ViewImage& view, const PromptSet& prompts) {
  if (prompts.empty()) throw Error(Errc::invalid_argument, "segment called with no prompts");
  return oracle_segment(instances_for(view), prompts, view.view_id, boundary_px_);
}

std::vector<ScoredBox> OracleBackend::detect_boxes(const ViewImage& view,
                                                   const std::string& text) {
  if (text.empty()) throw Error(Errc::invalid_argument, "detection text must be non-empty");
  const auto label = labels_.find(text);
  if (label == labels_.end()) return {};
  return oracle_boxes(instances_for(view), label->second);
}

// ---------------------------------------------------------------- RLE

RleMask encode_rle(const BitMask& mask) {
  RleMask rle;
  rle.height = mask.height();
  rle.width = mask.width();
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint8_t bit = mask[i] ? 1 : 0;
    if (bit != current) {
      rle.counts.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

BitMask decode_rle(const RleMask& rle) {
  if (rle.height < 0 || rle.width < 0) throw Error(Errc::protocol, "negative RLE size");
  BitMask mask(rle.width, rle.height, 0);
  std::size_t pos = 0;
  std::uint8_t bit = 0;
  for (const auto run : rle.counts) {
    if (pos + run > mask.size()) throw Error(Errc::protocol, "RLE runs exceed the mask size");
    std::fill_n(mask.data().begin() + static_cast<std::ptrdiff_t>(pos), run, bit);
    pos += run;
    bit ^= 1;
  }
  if (pos != mask.size()) throw Error(Errc::protocol, "RLE runs do not cover the mask");
  return mask;
}

json rle_to_json(const RleMask& rle) {
  return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
}

RleMask rle_from_json(const json& j) {
  try {
    RleMask rle;
    const auto& size = j.at("size");
    if (!size.is_array() || size.size() != 2) throw Error(Errc::protocol, "RLE size must be [h, w]");
    rle.height = size[0].get<int>();
    rle.width = size[1].get<int>();
    rle.counts = j.at("counts").get<std::vector<std::uint32_t>>();
    return rle;
  } catch (const json::exception& e) {
    throw Error(Errc::protocol, std::string("malformed RLE mask: ") + e.what());
  }
}

// ---------------------------------------------------------------- base64

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw Error(Errc::protocol, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(Errc::protocol, "invalid base64 payload");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

// ---------------------------------------------------------------- requests

json make_hello_request(std::int64_t id) {
  return {{"id", id}, {"op", "hello"}, {"proto", kProtocolVersion}};
}

json make_segment_request(std::int64_t id, const ViewImage& view, const PromptSet& prompts) {
  json points = json::array();
  for (const auto& p : prompts.points) {
    points.push_back({p.u, p.v, p.polarity == Polarity::positive ? 1 : 0});
  }
  json box = nullptr;
  if (prompts.box) {
    box = {prompts.box->u_min, prompts.box->v_min, prompts.box->u_max, prompts.box->v_max};
  }
  return {{"id", id},
          {"op", "segment"},
          {"image", base64_encode(encode_png(view.rgb))},
          {"points", std::move(points)},
          {"box", std::move(box)}};
}

json make_detect_request(std::int64_t id, const ViewImage& view, const std::string& text) {
  return {{"id", id},
          {"op", "detect"},
          {"image", base64_encode(encode_png(view.rgb))},
          {"text", text}};
}

// ---------------------------------------------------------------- bridge

void SegmenterHandle::validate() const {
  if (backend == BackendKind::bridge && (!endpoint || endpoint->empty())) {
    throw Error(Errc::invalid_argument, "bridge backend requires an endpoint");
  }
  if (timeout.count() <= 0) throw Error(Errc::invalid_argument, "timeout must be positive");
}

BridgeClient::BridgeClient(const SegmenterHandle& handle) : timeout_(handle.timeout) {
  handle.validate();
  if (handle.backend != BackendKind::bridge) {
    throw Error(Errc::invalid_argument, "BridgeClient needs a bridge handle");
  }
  endpoint_ = *handle.endpoint;
}

void BridgeClient::ensure_connected(Clock::time_point deadline) {
  if (channel_) return;
  auto channel = open_channel(endpoint_, deadline);
  channel->send_line(make_hello_request(0).dump(), deadline);
  const std::string line = channel->receive_line(deadline);
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(Errc::protocol, std::string("malformed hello reply: ") + e.what());
  }
  if (!reply.is_object() || reply.value("proto", -1) != kProtocolVersion) {
    throw Error(Errc::protocol, "bridge does not speak protocol version 1: " + line);
  }
  channel_ = std::move(channel);
}

json BridgeClient::round_trip(const json& request, Clock::time_point deadline) {
  ensure_connected(deadline);
  try {
    channel_->send_line(request.dump(), deadline);
    const std::string line = channel_->receive_line(deadline);
    json reply;
    try {
      reply = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::protocol, std::string("malformed bridge reply: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("id") || reply["id"] != request["id"]) {
      throw Error(Errc::protocol, "bridge reply id does not match the request");
    }
    if (reply.contains("error")) {
      throw Error(Errc::protocol, "bridge error: " + reply["error"].dump());
    }
    return reply;
  } catch (const Error& e) {
    // The stream position is unknown after a failure; reconnect next time.
    if (e.code() == Errc::transport || e.code() == Errc::protocol) channel_.reset();
    throw;
  }
}

Mask BridgeClient::segment(const ViewImage& view, const PromptSet& prompts) {
  if (prompts.empty()) throw Error(Errc::invalid_argument, "segment called with no prompts");
  prompts.validate(view.intrinsics.width, view.intrinsics.height);
  std::lock_guard lock(mutex_);
  const auto deadline = Clock::now() + timeout_;
  const json reply = round_trip(make_segment_request(next_id_++, view, prompts), deadline);
  if (!reply.contains("mask") || !reply.contains("score") || !reply["score"].is_number()) {
    throw Error(Errc::protocol, "segment reply lacks mask or score");
  }
  Mask mask;
  mask.view_id = view.view_id;
  mask.bits = decode_rle(rle_from_json(reply["mask"]));
  if (!mask.bits.same_shape(view.intrinsics.width, view.intrinsics.height)) {
    throw Error(Errc::protocol, "bridge mask size differs from the image");
  }
  mask.score = reply["score"].get<double>();
  mask.status = MaskStatus::accepted;
  if (count_set(mask.bits) == 0) throw Error(Errc::empty_mask, "bridge returned an empty mask");
  return mask;
}

std::vector<ScoredBox> BridgeClient::detect_boxes(const ViewImage& view, const std::string& text) {
  if (text.empty()) throw Error(Errc::invalid_argument, "detection text must be non-empty");
  std::lock_guard lock(mutex_);
  const auto deadline = Clock::now() + timeout_;
  const json reply = round_trip(make_detect_request(next_id_++, view, text), deadline);
  std::vector<ScoredBox> boxes;
  try {
    for (const auto& jb : reply.at("boxes")) {
      const auto xyxy = jb.at("xyxy").get<std::vector<double>>();
      if (xyxy.size() != 4) throw Error(Errc::protocol, "box must have 4 coordinates");
      boxes.push_back({Box{xyxy[0], xyxy[1], xyxy[2], xyxy[3]}, jb.at("score").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::protocol, std::string("malformed detect reply: ") + e.what());
  }
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
  return boxes;
}

std::unique_ptr<SegmentationBackend> make_backend(const SegmenterHandle& handle,
                                                  std::map<int, InstanceMap> instances,
                                                  std::map<std::string, int> labels) {
  handle.validate();
  if (handle.backend == BackendKind::bridge) return std::make_unique<BridgeClient>(handle);
  return std::make_unique<OracleBackend>(std::move(instances), std::move(labels));
}

}  // namespace segfield
