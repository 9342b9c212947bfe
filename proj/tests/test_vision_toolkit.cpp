#include <gtest/gtest.h>

#include <fstream>

#include "mtrx/vision_toolkit.hpp"
#include "test_util.hpp"

using namespace mtrx;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mtrx::Error";
  return ErrorCode::InvariantViolation;
}

ToolInvocation call(std::string tool, Json args) { return {std::move(tool), std::move(args), "call-1"}; }

class EchoBackend : public ToolBackend {
 public:
  ToolResult run(const ToolInvocation&) const override {
    ToolResult r;
    r.payload = std::vector<Detection>{};
    return r;
  }
};

class FailingBackend : public ToolBackend {
 public:
  explicit FailingBackend(ErrorCode code) : code_(code) {}
  ToolResult run(const ToolInvocation&) const override { fail(code_, "boom"); }

 private:
  ErrorCode code_;
};

class BadConfidenceBackend : public ToolBackend {
 public:
  ToolResult run(const ToolInvocation&) const override {
    ToolResult r;
    r.payload = std::vector<Detection>{{"car", {0, 0, 1, 1}, 1.5, std::nullopt}};
    return r;
  }
};

const std::filesystem::path kImage = "images/s01-red-light.ppm";

}  // namespace

TEST(Registry, RegisterListAndDuplicate) {
  ToolRegistry reg = make_fixture_registry(test::fixtures());
  EXPECT_EQ(reg.list(), (std::vector<std::string>{"crop_image", "detect_objects", "detect_open_vocab"}));
  EXPECT_EQ(code_of([&] { reg.register_tool(builtin_tool_specs()[0], std::make_shared<EchoBackend>()); }),
            ErrorCode::DuplicateTool);
}

TEST(Registry, UnknownToolAndBadArgs) {
  ToolRegistry reg = make_fixture_registry(test::fixtures());
  EXPECT_EQ(code_of([&] { reg.invoke(call("teleport", {})); }), ErrorCode::UnknownTool);
  EXPECT_EQ(code_of([&] { reg.invoke(call("detect_objects", {{"image_ref", kImage.string()}})); }),
            ErrorCode::ArgsInvalid);
  EXPECT_EQ(code_of([&] { reg.invoke(call("detect_objects", {{"image_ref", kImage.string()}, {"range", "far"}})); }),
            ErrorCode::ArgsInvalid);
  EXPECT_EQ(code_of([&] {
              reg.invoke(call("detect_objects", {{"image_ref", kImage.string()}, {"range", 5}, {"extra", 1}}));
            }),
            ErrorCode::ArgsInvalid);
  EXPECT_EQ(code_of([&] { reg.invoke(call("crop_image", {{"image_ref", "a"}, {"x", 1.5}, {"y", 0}, {"w", 1}, {"h", 1},
                                                          {"out_ref", "o"}})); }),
            ErrorCode::ArgsInvalid);
}

TEST(Registry, BackendErrorsBecomeErrorResultsExceptUnavailable) {
  ToolRegistry reg;
  auto spec = builtin_tool_specs()[0];  // detect_objects
  reg.register_tool(spec, std::make_shared<FailingBackend>(ErrorCode::IoFailure));
  const auto r = reg.invoke(call(spec.name, {{"image_ref", "x"}, {"range", 1.0}}));
  EXPECT_EQ(r.status, ToolStatus::error);
  EXPECT_EQ(r.invocation_id, "call-1");

  ToolRegistry down;
  down.register_tool(spec, std::make_shared<FailingBackend>(ErrorCode::BackendUnavailable));
  EXPECT_EQ(code_of([&] { down.invoke(call(spec.name, {{"image_ref", "x"}, {"range", 1.0}})); }),
            ErrorCode::BackendUnavailable);
}

TEST(Registry, ConfidenceOutsideUnitIntervalIsAnError) {
  ToolRegistry reg;
  auto spec = builtin_tool_specs()[0];  // detect_objects
  reg.register_tool(spec, std::make_shared<BadConfidenceBackend>());
  EXPECT_EQ(reg.invoke(call(spec.name, {{"image_ref", "x"}, {"range", 1.0}})).status, ToolStatus::error);
}

TEST(FixtureBackend, DetectObjectsFiltersByRange) {
  ToolRegistry reg = make_fixture_registry(test::fixtures());
  const auto near = reg.invoke(call("detect_objects", {{"image_ref", kImage.string()}, {"range", 20.0}}));
  ASSERT_EQ(near.status, ToolStatus::ok);
  const auto& dets = std::get<std::vector<Detection>>(near.payload);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].label, "car");
  const auto all = reg.invoke(call("detect_objects", {{"image_ref", kImage.string()}, {"range", 100.0}}));
  EXPECT_EQ(std::get<std::vector<Detection>>(all.payload).size(), 2u);
}

TEST(FixtureBackend, DetectionsLieInsideTheImage) {
  for (const auto& entry : std::filesystem::directory_iterator(test::fixtures() / "images")) {
    if (entry.path().extension() != ".json") continue;
    const auto ann = load_annotation(entry.path());
    const Image img = read_pnm(std::filesystem::path(entry.path()).replace_extension(".ppm"));
    EXPECT_EQ(ann.image_width, img.width);
    EXPECT_EQ(ann.image_height, img.height);
    for (const auto& d : ann.objects) {
      EXPECT_TRUE(bbox_within(d.bbox, img.width, img.height)) << entry.path();
      EXPECT_GE(d.confidence, 0.0);
      EXPECT_LE(d.confidence, 1.0);
    }
  }
}

TEST(FixtureBackend, OpenVocabularyQuery) {
  ToolRegistry reg = make_fixture_registry(test::fixtures());
  const auto r = reg.invoke(call("detect_open_vocab", {{"image_ref", "images/s03-construction.ppm"},
                                                        {"query", "traffic cone"}}));
  const auto& dets = std::get<std::vector<Detection>>(r.payload);
  ASSERT_EQ(dets.size(), 2u);
  for (const auto& d : dets) EXPECT_EQ(d.label, "traffic cone");
  const auto none = reg.invoke(call("detect_open_vocab", {{"image_ref", "images/s03-construction.ppm"},
                                                           {"query", "giraffe"}}));
  EXPECT_TRUE(std::get<std::vector<Detection>>(none.payload).empty());
}

TEST(FixtureBackend, MissingAnnotationIsErrorResult) {
  ToolRegistry reg = make_fixture_registry(test::fixtures());
  const auto r = reg.invoke(call("detect_objects", {{"image_ref", "images/nope.ppm"}, {"range", 1.0}}));
  EXPECT_EQ(r.status, ToolStatus::error);
}

TEST(Crop, PixelsMatchSourceRegion) {
  test::TempDir dir("crop");
  ToolRegistry reg = make_fixture_registry(test::fixtures(), dir.path());
  const auto r = reg.invoke(call("crop_image", {{"image_ref", kImage.string()}, {"x", 10}, {"y", 5}, {"w", 20},
                                                {"h", 12}, {"out_ref", "c.ppm"}}));
  ASSERT_EQ(r.status, ToolStatus::ok) << r.error_reason;
  const auto& out = std::get<CropOutput>(r.payload);
  EXPECT_EQ(out.out_ref, "c.ppm");
  EXPECT_EQ(out.width, 20);
  EXPECT_EQ(out.height, 12);
  const Image src = read_pnm(test::fixtures() / kImage);
  const Image dst = read_pnm(dir / "c.ppm");
  ASSERT_EQ(dst.channels, src.channels);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 20; ++x)
      for (int c = 0; c < src.channels; ++c)
        ASSERT_EQ(dst.pixels[(y * 20 + x) * dst.channels + c],
                  src.pixels[((y + 5) * src.width + (x + 10)) * src.channels + c]);
}

TEST(Crop, OutOfBoundsRegionIsErrorNotClamped) {
  test::TempDir dir("crop-oob");
  const Image src = read_pnm(test::fixtures() / kImage);
  EXPECT_EQ(code_of([&] { crop(src, {60, 0, 10, 10}); }), ErrorCode::RegionOutOfBounds);
  EXPECT_EQ(code_of([&] { crop(src, {0, 0, 0, 10}); }), ErrorCode::RegionOutOfBounds);
  EXPECT_EQ(code_of([&] { crop(src, {-1, 0, 5, 5}); }), ErrorCode::RegionOutOfBounds);
  ToolRegistry reg = make_fixture_registry(test::fixtures(), dir.path());
  const auto r = reg.invoke(call("crop_image", {{"image_ref", kImage.string()}, {"x", 60}, {"y", 0}, {"w", 10},
                                                {"h", 10}, {"out_ref", "c.ppm"}}));
  EXPECT_EQ(r.status, ToolStatus::error);
  EXPECT_FALSE(std::filesystem::exists(dir / "c.ppm"));
}

TEST(Pnm, AsciiAndBinaryRoundTrip) {
  test::TempDir dir("pnm");
  {
    std::ofstream f(dir / "a.pgm");
    f << "P2\n# comment\n3 2\n255\n0 1 2\n3 4 255\n";
  }
  const Image a = read_pnm(dir / "a.pgm");
  EXPECT_EQ(a.channels, 1);
  EXPECT_EQ(a.pixels, (std::vector<std::uint8_t>{0, 1, 2, 3, 4, 255}));
  write_pnm(a, dir / "b.pgm");
  EXPECT_EQ(read_pnm(dir / "b.pgm").pixels, a.pixels);
}

TEST(Labels, TokenMatching) {
  EXPECT_TRUE(labels_match("Traffic Cone", "cone"));
  EXPECT_FALSE(labels_match("traffic light", "cone"));
}
