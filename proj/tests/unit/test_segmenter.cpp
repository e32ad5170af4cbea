#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <functional>
#include <thread>

#include "segfield/error.hpp"
#include "segfield/image_io.hpp"
#include "segfield/segmenter.hpp"
#include "segfield/synthetic.hpp"

using namespace segfield;
using nlohmann::json;

namespace {

// Line-oriented TCP server on 127.0.0.1 that answers each request with
// `respond(request)`; an empty reply string means "stall without answering".
class MockBridge {
 public:
  explicit MockBridge(std::function<std::string(const json&)> respond)
      : respond_(std::move(respond)) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    ::listen(listen_fd_, 4);
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }

  ~MockBridge() {
    stop_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    thread_.join();
  }

  std::string endpoint() const { return "tcp://127.0.0.1:" + std::to_string(port_); }
  std::vector<json> requests;

 private:
  void serve() {
    while (!stop_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      std::string buffer;
      char chunk[4096];
      for (;;) {
        const ssize_t n = ::read(fd, chunk, sizeof(chunk));
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
          const json request = json::parse(buffer.substr(0, nl));
          buffer.erase(0, nl + 1);
          requests.push_back(request);
          const std::string reply = respond_(request);
          if (!reply.empty()) {
            const std::string line = reply + "\n";
            ::send(fd, line.data(), line.size(), MSG_NOSIGNAL);
          }
        }
      }
      ::close(fd);
    }
  }

  std::function<std::string(const json&)> respond_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

ViewImage small_view(int w = 6, int h = 4) {
  ViewImage v;
  v.view_id = 3;
  v.rgb = RgbImage(w, h, Eigen::Vector3f(0.2f, 0.4f, 0.6f));
  v.intrinsics.width = w;
  v.intrinsics.height = h;
  v.intrinsics.fx = v.intrinsics.fy = 10;
  v.intrinsics.cx = 2;
  v.intrinsics.cy = 2;
  return v;
}

BitMask fixture_mask() {
  BitMask m(6, 4, 0);
  m(1, 1) = m(2, 1) = m(3, 1) = m(2, 2) = 1;
  return m;
}

std::string hello_or(const json& req, const json& reply) {
  if (req["op"] == "hello") return json{{"id", req["id"]}, {"proto", 1}}.dump();
  json r = reply;
  r["id"] = req["id"];
  return r.dump();
}

SegmenterHandle bridge_handle(const std::string& endpoint, int timeout_ms = 2000) {
  SegmenterHandle h;
  h.backend = BackendKind::bridge;
  h.endpoint = endpoint;
  h.timeout = std::chrono::milliseconds(timeout_ms);
  return h;
}

PromptSet one_point() {
  PromptSet p;
  p.points.push_back({2, 1, Polarity::positive});
  return p;
}

}  // namespace

TEST(Rle, RoundTripAndLayout) {
  const BitMask m = fixture_mask();
  const RleMask rle = encode_rle(m);
  EXPECT_EQ(rle.height, 4);
  EXPECT_EQ(rle.width, 6);
  // Row-major: 7 zeros, 3 ones, 4 zeros, 1 one, 9 zeros.
  EXPECT_EQ(rle.counts, (std::vector<std::uint32_t>{7, 3, 4, 1, 9}));
  EXPECT_EQ(decode_rle(rle), m);
  EXPECT_EQ(encode_rle(decode_rle(rle)), rle);
  EXPECT_EQ(rle_from_json(rle_to_json(rle)), rle);
}

TEST(Rle, LeadingOnesStartWithEmptyZeroRun) {
  BitMask m(2, 1, 1);
  EXPECT_EQ(encode_rle(m).counts, (std::vector<std::uint32_t>{0, 2}));
}

TEST(Rle, BadCoverageIsProtocolError) {
  RleMask rle{4, 6, {7, 3}};
  try {
    decode_rle(rle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::protocol);
  }
  rle.counts = {20, 10};
  EXPECT_THROW(decode_rle(rle), Error);
}

TEST(Base64, RoundTrip) {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 100u}) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 1);
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  EXPECT_EQ(base64_encode({'M', 'a'}), "TWE=");
}

TEST(OracleBackend, DelegatesToOracleSegment) {
  SceneSpec spec = preset_scene("sphere");
  spec.cameras.resize(1);
  const auto views = render_scene(spec);
  OracleBackend backend({{views[0].view.view_id, views[0].instances}}, {{"sphere", 1}});
  PromptSet p;
  p.points.push_back({64, 64, Polarity::positive});
  const Mask a = backend.segment(views[0].view, p);
  EXPECT_EQ(a.bits, oracle_segment(views[0].instances, p).bits);
  EXPECT_EQ(backend.segment(views[0].view, p).bits, a.bits);
  const auto boxes = backend.detect_boxes(views[0].view, "sphere");
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].box, oracle_boxes(views[0].instances, 1)[0].box);
  EXPECT_TRUE(backend.detect_boxes(views[0].view, "teapot").empty());
}

TEST(BridgeClient, SegmentDecodesFixtureMask) {
  const json reply{{"mask", rle_to_json(encode_rle(fixture_mask()))}, {"score", 0.875}};
  MockBridge server([&](const json& req) { return hello_or(req, reply); });
  BridgeClient client(bridge_handle(server.endpoint()));
  const Mask m = client.segment(small_view(), one_point());
  EXPECT_EQ(m.bits, fixture_mask());
  EXPECT_EQ(m.score, 0.875);
  EXPECT_EQ(m.view_id, 3);

  ASSERT_EQ(server.requests.size(), 2u);
  EXPECT_EQ(server.requests[0]["op"], "hello");
  EXPECT_EQ(server.requests[0]["proto"], 1);
  const json& seg = server.requests[1];
  EXPECT_EQ(seg["op"], "segment");
  EXPECT_EQ(seg["points"], json::parse("[[2.0, 1.0, 1]]"));
  EXPECT_TRUE(seg["box"].is_null());
  const auto png = base64_decode(seg["image"].get<std::string>());
  const RgbImage sent = decode_png(png);
  EXPECT_TRUE(sent.same_shape(6, 4));
}

TEST(BridgeClient, DetectKeepsDescendingOrder) {
  const json reply{{"boxes",
                    {{{"xyxy", {1, 1, 3, 2}}, {"score", 0.4}},
                     {{"xyxy", {0, 0, 5, 3}}, {"score", 0.9}}}}};
  MockBridge server([&](const json& req) { return hello_or(req, reply); });
  BridgeClient client(bridge_handle(server.endpoint()));
  const auto boxes = client.detect_boxes(small_view(), "sphere");
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[0].score, 0.9);
  EXPECT_EQ(boxes[1].score, 0.4);
  EXPECT_EQ(boxes[0].box, (Box{0, 0, 5, 3}));
  EXPECT_EQ(server.requests.back()["text"], "sphere");
}

TEST(BridgeClient, EmptyDetection) {
  MockBridge server([&](const json& req) { return hello_or(req, {{"boxes", json::array()}}); });
  BridgeClient client(bridge_handle(server.endpoint()));
  EXPECT_TRUE(client.detect_boxes(small_view(), "sphere").empty());
}

TEST(BridgeClient, StallingServerTimesOut) {
  MockBridge server([](const json& req) -> std::string {
    if (req["op"] == "hello") return json{{"id", req["id"]}, {"proto", 1}}.dump();
    return "";
  });
  BridgeClient client(bridge_handle(server.endpoint(), 1));
  try {
    client.segment(small_view(), one_point());
    FAIL() << "expected a transport error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::transport);
    EXPECT_EQ(classify(e.code()), ErrorClass::segmenter_transport);
  }
}

TEST(BridgeClient, UnreachableIsTransportError) {
  int port;
  {
    MockBridge probe([](const json&) { return std::string(); });
    port = std::stoi(probe.endpoint().substr(probe.endpoint().rfind(':') + 1));
  }
  BridgeClient client(bridge_handle("tcp://127.0.0.1:" + std::to_string(port), 500));
  try {
    client.segment(small_view(), one_point());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::transport);
  }
}

TEST(BridgeClient, MalformedReplyIsProtocolError) {
  MockBridge server([](const json& req) -> std::string {
    if (req["op"] == "hello") return json{{"id", req["id"]}, {"proto", 1}}.dump();
    return "{not json";
  });
  BridgeClient client(bridge_handle(server.endpoint()));
  try {
    client.segment(small_view(), one_point());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::protocol);
  }
}

TEST(BridgeClient, MismatchedIdAndErrorReplies) {
  int calls = 0;
  MockBridge server([&](const json& req) -> std::string {
    if (req["op"] == "hello") return json{{"id", req["id"]}, {"proto", 1}}.dump();
    ++calls;
    if (calls == 1) return json{{"id", 12345}, {"score", 1.0}}.dump();
    return json{{"id", req["id"]}, {"error", "model exploded"}}.dump();
  });
  BridgeClient client(bridge_handle(server.endpoint()));
  EXPECT_THROW(client.segment(small_view(), one_point()), Error);
  try {
    client.segment(small_view(), one_point());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::protocol);
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
  }
}

TEST(BridgeClient, WrongProtocolVersionRejected) {
  MockBridge server([](const json& req) { return json{{"id", req["id"]}, {"proto", 2}}.dump(); });
  BridgeClient client(bridge_handle(server.endpoint()));
  try {
    client.segment(small_view(), one_point());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::protocol);
  }
}

TEST(BridgeClient, EmptyMaskIsDistinctFromTransport) {
  const json reply{{"mask", rle_to_json(encode_rle(BitMask(6, 4, 0)))}, {"score", 0.1}};
  MockBridge server([&](const json& req) { return hello_or(req, reply); });
  BridgeClient client(bridge_handle(server.endpoint()));
  try {
    client.segment(small_view(), one_point());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_mask);
    EXPECT_NE(classify(e.code()), ErrorClass::segmenter_transport);
  }
}

TEST(BridgeClient, StdioSubprocessEndpoint) {
  // A shell one-liner bridge: answers hello then a fixed detect reply.
  const std::string script =
      "exec:read a; echo '{\"id\":0,\"proto\":1}'; read b; "
      "echo '{\"id\":1,\"boxes\":[{\"xyxy\":[0,0,2,2],\"score\":0.5}]}'; read c";
  BridgeClient client(bridge_handle(script));
  const auto boxes = client.detect_boxes(small_view(), "x");
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].score, 0.5);
}

TEST(SegmenterHandle, BridgeNeedsEndpoint) {
  SegmenterHandle h;
  h.backend = BackendKind::bridge;
  EXPECT_THROW(h.validate(), Error);
  EXPECT_THROW(open_channel("carrier-pigeon://x", Clock::now()), Error);
}
