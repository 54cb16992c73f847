#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vigil/edgenode.hpp"

using namespace vigil;
using namespace vigil::edgenode;

namespace {

// Flat background with one optional moving rectangle, defined on the level-2
// (1280x960) pixel grid and scaled to whatever resolution the node asks for.
struct StubScene : FrameSource {
  bool with_actor = false;
  double x0 = 400, y0 = 300, box_w = 60, box_h = 120;  // level-2 pixels
  double vx = 120;                                     // level-2 px/s
  std::vector<std::pair<int, int>> render_dims;

  double actor_x(SimTime t) const { return x0 + vx * static_cast<double>(t) / 1e6; }

  void render(int, SimTime t, bgmodel::Frame& frame) override {
    render_dims.emplace_back(frame.width, frame.height);
    std::fill(frame.pixels.begin(), frame.pixels.end(), static_cast<std::uint8_t>(120));
    if (!with_actor) return;
    const double sx = frame.width / 1280.0;
    const double sy = frame.height / 960.0;
    const int px0 = static_cast<int>(std::floor(actor_x(t) * sx));
    const int py0 = static_cast<int>(std::floor(y0 * sy));
    const int px1 = static_cast<int>(std::floor((actor_x(t) + box_w) * sx));
    const int py1 = static_cast<int>(std::floor((y0 + box_h) * sy));
    for (int y = std::max(0, py0); y < std::min(frame.height, py1); ++y) {
      for (int x = std::max(0, px0); x < std::min(frame.width, px1); ++x) {
        frame.pixels[static_cast<size_t>(y) * frame.width + static_cast<size_t>(x)] = 220;
      }
    }
  }

  std::vector<perception::GroundTruthActor> actors_in_view(int, SimTime t, int width,
                                                           int height) override {
    if (!with_actor) return {};
    const double sx = width / 1280.0;
    const double sy = height / 960.0;
    perception::GroundTruthActor a;
    a.actor_id = "walker";
    a.bbox = {actor_x(t) * sx, y0 * sy, box_w * sx, box_h * sy};
    a.latent = perception::descriptor_from_seed(5);
    return {a};
  }
};

geometry::Homography scale_homography(double s) {
  geometry::Homography h;
  h.h = Eigen::Matrix3d::Identity();
  h.h(0, 0) = s;
  h.h(1, 1) = s;
  return h;
}

EdgeNodeConfig base_config(int level) {
  EdgeNodeConfig c;
  c.camera_id = 0;
  c.initial_level = level;
  c.homography = scale_homography(0.01);
  c.perception.p_fn = {0.0, 0.0, 0.0};
  c.perception.p_fp = {0.0, 0.0, 0.0};
  c.seed = 0x5eed4000;
  return c;
}

const msg::EdgeReport* find_report(const std::vector<netsim::Message>& msgs) {
  for (const auto& m : msgs) {
    if (m.kind == netsim::MessageKind::kEdgeReport) {
      return &std::get<msg::EdgeReport>(m.payload);
    }
  }
  return nullptr;
}

const netsim::Message* find_kind(const std::vector<netsim::Message>& msgs,
                                 netsim::MessageKind kind) {
  for (const auto& m : msgs) {
    if (m.kind == kind) return &m;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("mode table rows are exact") {
  const auto std_rates = standard_rates();
  CHECK(std_rates[0].width == 320);
  CHECK(std_rates[0].height == 240);
  CHECK(std_rates[0].fps == 5);
  CHECK(std_rates[0].livestream_mb_s == 0.41);
  CHECK(std_rates[0].chunk_bytes == 82000);
  CHECK(std_rates[1].width == 640);
  CHECK(std_rates[1].height == 480);
  CHECK(std_rates[1].fps == 15);
  CHECK(std_rates[1].livestream_mb_s == 1.90);
  CHECK(std_rates[1].chunk_bytes == 126667);
  CHECK(std_rates[2].width == 1280);
  CHECK(std_rates[2].height == 960);
  CHECK(std_rates[2].fps == 30);
  CHECK(std_rates[2].livestream_mb_s == 8.40);
  CHECK(std_rates[2].chunk_bytes == 280000);

  const auto high = high_bandwidth_rates();
  CHECK(high[0].livestream_mb_s == 6.9);
  CHECK(high[0].chunk_bytes == 1380000);
  CHECK(high[1].livestream_mb_s == 27.6);
  CHECK(high[1].chunk_bytes == 1840000);
  CHECK(high[2].livestream_mb_s == 110.6);
  CHECK(high[2].chunk_bytes == 3686667);
  for (int i = 0; i < 3; ++i) {
    CHECK(high[static_cast<size_t>(i)].fps == std_rates[static_cast<size_t>(i)].fps);
  }
}

TEST_CASE("device latency model is monotone in mode level") {
  for (const auto dev : {DeviceProfile::kTX2, DeviceProfile::kXavier}) {
    CHECK(processing_fps(dev, 0) > processing_fps(dev, 1));
    CHECK(processing_fps(dev, 1) > processing_fps(dev, 2));
  }
  CHECK(processing_fps(DeviceProfile::kTX2, 2) == 31.7);
  CHECK(processing_fps(DeviceProfile::kXavier, 0) == 98.3);
  CHECK_THROWS_AS(processing_fps(DeviceProfile::kTX2, 3), std::out_of_range);
}

TEST_CASE("frames_in_span counts the drift-free schedule") {
  CHECK(frames_in_span(1000000, 5) == 5);
  CHECK(frames_in_span(999999, 30) == 30);
  CHECK(frames_in_span(1, 30) == 1);
  CHECK(frames_in_span(0, 30) == 0);
  CHECK(frames_in_span(10000000, 30) == 300);
  // Matches a literal enumeration of frame times for odd durations.
  for (const SimTime dur : {333333, 666667, 123457, 1999999}) {
    for (const int fps : {5, 15, 30}) {
      std::int64_t count = 0;
      while (count * 1000000 / fps < dur) ++count;
      CHECK(frames_in_span(dur, fps) == count);
    }
  }
}

TEST_CASE("mode 0 tick emits the 0.082 MB chunk and an empty report") {
  StubScene scene;
  EdgeNode node(base_config(0));
  CHECK(node.next_frame_at() == 0);

  const auto msgs = node.tick(0, scene);
  REQUIRE(msgs.size() == 2);
  const auto* chunk = find_kind(msgs, netsim::MessageKind::kVideoChunk);
  REQUIRE(chunk != nullptr);
  CHECK(chunk->size_bytes == 82000);
  CHECK(chunk->sent_at == 0);
  const auto* report = find_kind(msgs, netsim::MessageKind::kEdgeReport);
  REQUIRE(report != nullptr);
  CHECK(std::get<msg::EdgeReport>(report->payload).event_hint == msg::EventHint::kNone);
  CHECK(std::get<msg::EdgeReport>(report->payload).detections.empty());
  CHECK(node.next_frame_at() == 200000);
  CHECK(scene.render_dims.back() == std::pair<int, int>{320, 240});
}

TEST_CASE("report latency follows the device profile") {
  StubScene scene;
  auto cfg = base_config(2);
  cfg.device = DeviceProfile::kTX2;
  EdgeNode tx2(cfg);
  auto msgs = tx2.tick(0, scene);
  const auto* report = find_kind(msgs, netsim::MessageKind::kEdgeReport);
  REQUIRE(report != nullptr);
  CHECK(report->sent_at == 31546);  // 1e6 / 31.7 fps, rounded
  CHECK(static_cast<double>(report->sent_at) / 1000.0 == doctest::Approx(31.5).epsilon(1e-2));

  cfg.device = DeviceProfile::kXavier;
  EdgeNode xavier(cfg);
  msgs = xavier.tick(0, scene);
  CHECK(find_kind(msgs, netsim::MessageKind::kEdgeReport)->sent_at == 19841);
}

TEST_CASE("warm-up suppresses rois, then a moving actor is detected") {
  StubScene scene;
  scene.with_actor = true;
  EdgeNode node(base_config(1));

  // 30 warm-up frames: reports stay empty although the actor is in view.
  for (int i = 0; i < 30; ++i) {
    const auto msgs = node.tick(node.next_frame_at(), scene);
    const auto* r = find_report(msgs);
    REQUIRE(r != nullptr);
    CHECK(r->detections.empty());
  }
  CHECK(node.in_warmup());

  // Frame 30 is past warm-up and on the detector cadence.
  const SimTime t30 = node.next_frame_at();
  CHECK(t30 == 2000000);
  auto msgs = node.tick(t30, scene);
  CHECK_FALSE(node.in_warmup());
  const auto* r = find_report(msgs);
  REQUIRE(r != nullptr);
  REQUIRE(r->detections.size() == 1);
  const auto& det = r->detections[0];
  CHECK(det.source == perception::DetectionSource::kDetector);
  CHECK(det.has_descriptor);
  CHECK(det.true_subject == "walker");
  CHECK(det.camera_id == 0);
  CHECK(det.timestamp == t30);
  // Foot of the box at t=2 s: level-2 grid (640+30, 420) -> world /100.
  CHECK(det.world_point.x() == doctest::Approx(6.70).epsilon(0.02));
  CHECK(det.world_point.y() == doctest::Approx(4.20).epsilon(0.02));
  CHECK(std::get<msg::EdgeReport>(
            find_kind(msgs, netsim::MessageKind::kEdgeReport)->payload)
            .event_hint == msg::EventHint::kPersonDetected);

  // Frames 31..34 are between detector passes: ROI-only pseudo-detections.
  for (int i = 0; i < 4; ++i) {
    msgs = node.tick(node.next_frame_at(), scene);
    const auto* pr = find_report(msgs);
    REQUIRE(pr->detections.size() == 1);
    CHECK(pr->detections[0].source == perception::DetectionSource::kRoiOnly);
    CHECK_FALSE(pr->detections[0].has_descriptor);
    CHECK(pr->detections[0].world_point.x() > 0);
  }
}

TEST_CASE("reconfig applies at the next frame boundary with one ack") {
  StubScene scene;
  EdgeNode node(base_config(0));
  node.tick(0, scene);
  CHECK(scene.render_dims.back() == std::pair<int, int>{320, 240});

  SUBCASE("upgrade resets the model and logs the transition") {
    node.apply_reconfig({0, 2, msg::EventCause::kBrokenPerimeter, 50000});
    CHECK(node.level() == 0);  // not yet: boundary is at 200 ms
    const auto msgs = node.tick(200000, scene);
    CHECK(node.level() == 2);
    CHECK(scene.render_dims.back() == std::pair<int, int>{1280, 960});
    CHECK(node.in_warmup());
    const auto* ack = find_kind(msgs, netsim::MessageKind::kAck);
    REQUIRE(ack != nullptr);
    CHECK(std::get<msg::Ack>(ack->payload).acked_level == 2);
    CHECK(node.next_frame_at() == 200000 + 33333);

    REQUIRE(node.events().size() == 2);
    CHECK(node.events()[0].cause == "initial");
    CHECK(node.events()[1].cause == "broken_perimeter");
    CHECK(node.events()[1].mode_level == 2);
    CHECK(node.events()[1].timestamp == 200000);
  }
  SUBCASE("no-op command is acknowledged without a reset") {
    // Get past warm-up first (31 frames at 5 fps).
    for (int i = 0; i < 30; ++i) node.tick(node.next_frame_at(), scene);
    CHECK_FALSE(node.in_warmup());
    node.apply_reconfig({0, 0, msg::EventCause::kNothingRelevant, 0});
    const auto msgs = node.tick(node.next_frame_at(), scene);
    const auto* ack = find_kind(msgs, netsim::MessageKind::kAck);
    REQUIRE(ack != nullptr);
    CHECK(std::get<msg::Ack>(ack->payload).acked_level == 0);
    CHECK_FALSE(node.in_warmup());
    CHECK(node.events().size() == 1);  // only the initial row
  }
  SUBCASE("two commands in one frame period: last writer wins, single ack") {
    node.apply_reconfig({0, 1, msg::EventCause::kDetection, 10000});
    node.apply_reconfig({0, 2, msg::EventCause::kConfirmedIntrusion, 20000});
    const auto msgs = node.tick(200000, scene);
    int acks = 0;
    for (const auto& m : msgs) {
      if (m.kind == netsim::MessageKind::kAck) {
        ++acks;
        CHECK(std::get<msg::Ack>(m.payload).acked_level == 2);
      }
    }
    CHECK(acks == 1);
    CHECK(node.level() == 2);
    REQUIRE(node.events().size() == 2);
    CHECK(node.events()[1].cause == "confirmed_intrusion");
  }
  SUBCASE("bad commands are rejected") {
    CHECK_THROWS_AS(node.apply_reconfig({0, 3, msg::EventCause::kDetection, 0}),
                    UnknownMode);
    CHECK_THROWS_AS(node.apply_reconfig({0, -1, msg::EventCause::kDetection, 0}),
                    UnknownMode);
    CHECK_THROWS_AS(node.apply_reconfig({9, 1, msg::EventCause::kDetection, 0}),
                    std::invalid_argument);
  }
}

TEST_CASE("bandwidth accounting matches the rate table") {
  StubScene scene;
  auto cfg = base_config(2);
  cfg.device = DeviceProfile::kXavier;

  SUBCASE("full window at mode 2") {
    EdgeNode node(cfg);
    while (node.next_frame_at() < 10000000) node.tick(node.next_frame_at(), scene);
    const double mb_s = node.bandwidth_used(0, 10000000);
    CHECK(mb_s == doctest::Approx(8.40).epsilon(0.01));
    CHECK(node.bandwidth_used(-2000000, 0) == 0.0);  // before the node started
    CHECK(node.bytes_sent() == 300 * 280000);
  }
  SUBCASE("half window mode 0, half mode 2") {
    cfg.initial_level = 0;
    EdgeNode node(cfg);
    bool switched = false;
    while (node.next_frame_at() < 10000000) {
      if (!switched && node.next_frame_at() >= 5000000) {
        node.apply_reconfig({0, 2, msg::EventCause::kConfirmedIntrusion, 4900000});
        switched = true;
      }
      node.tick(node.next_frame_at(), scene);
    }
    const double mb_s = node.bandwidth_used(0, 10000000);
    CHECK(std::abs(mb_s - 4.405) < 0.035);  // one frame quantum is 0.028

    // Exact dwell accounting: video bytes equal the analytic per-segment sum.
    REQUIRE(node.dwell_segments().size() == 2);
    const auto& segs = node.dwell_segments();
    const std::int64_t want =
        frames_in_span(segs[1].start - segs[0].start, 5) * 82000 +
        frames_in_span(10000000 - segs[1].start, 30) * 280000;
    CHECK(node.bytes_sent() == want);
  }
}

TEST_CASE("node event log formatting") {
  const std::string path = "node_events_fmt.csv";
  write_node_events(path, {{0, 1, 0, "initial", 0},
                           {5200000, 1, 2, "broken_perimeter", 2132000}});
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::remove(path.c_str());
  CHECK(ss.str() ==
        "timestamp_ms,camera_id,mode,cause,bytes_sent_cum\n"
        "0,1,0,initial,0\n"
        "5200,1,2,broken_perimeter,2132000\n");
}
