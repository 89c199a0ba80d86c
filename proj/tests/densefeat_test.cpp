/**
 * @file densefeat_test.cpp
 * @brief densefeat: pyramid, stitch/unstitch round-trips, per-pixel assembly.
 */
#include <contourkit/densefeat.hpp>
#include <contourkit/rng.hpp>

#include <gtest/gtest.h>

using namespace ck;

namespace {

ImagePlane random_plane(int h, int w, int c, Rng& rng) {
  ImagePlane plane(h, w, c);
  for (auto& v : plane.data) v = static_cast<float>(rng.next_unit());
  return plane;
}

// stride-4 tap net used for the interior-match checks
NetSpec stride4_net() {
  return NetSpec::parse(
      "input_channels=1\n"
      "kind=conv name=c1 out_channels=4 kernel=5 stride=2 pad=2\n"
      "kind=relu\n"
      "kind=maxpool kernel=2 stride=2\n"
      "kind=conv name=c2 out_channels=3 kernel=3 stride=1 pad=1\n"
      "kind=relu tap=D\n");
}

}  // namespace

TEST(Pyramid, ScaleOneIsOriginal) {
  Rng rng(1);
  const ImagePlane img = random_plane(9, 7, 3, rng);
  const auto planes = build_pyramid(img, {1.0});
  ASSERT_EQ(planes.size(), 1u);
  EXPECT_TRUE(std::equal(img.data.begin(), img.data.end(), planes[0].data.begin()));
}

TEST(Pyramid, HalfScaleHalvesDims) {
  const ImagePlane img(64, 64, 1, 0.5f);
  const auto planes = build_pyramid(img, {0.5});
  EXPECT_EQ(planes[0].height, 32);
  EXPECT_EQ(planes[0].width, 32);
}

TEST(Pyramid, UpscaledConstantStaysConstant) {
  const ImagePlane img(4, 4, 1, 0.33f);
  const auto planes = build_pyramid(img, {2.0});
  EXPECT_EQ(planes[0].height, 8);
  EXPECT_EQ(planes[0].width, 8);
  for (const float v : planes[0].data) EXPECT_FLOAT_EQ(v, 0.33f);
}

TEST(Pyramid, RejectsDegenerateScale) {
  const ImagePlane img(4, 4, 1);
  EXPECT_THROW(build_pyramid(img, {0.01}), ContractError);
  EXPECT_THROW(build_pyramid(img, {-1.0}), ContractError);
}

TEST(Stitch, SinglePlaneIsIdentity) {
  Rng rng(2);
  const ImagePlane img = random_plane(5, 3, 2, rng);
  const auto [stitched, layout] = stitch({img}, 0);
  EXPECT_EQ(stitched.height, 5);
  EXPECT_EQ(stitched.width, 3);
  EXPECT_TRUE(std::equal(img.data.begin(), img.data.end(), stitched.data.begin()));
  EXPECT_EQ(layout.tiles[0].row, 0);
  EXPECT_EQ(layout.tiles[0].col, 0);
}

TEST(Stitch, TwoTilesShareAShelfWithZeroGutter) {
  const ImagePlane a(2, 2, 1, 1.0f);
  const ImagePlane b(2, 2, 1, 2.0f);
  const auto [stitched, layout] = stitch({a, b}, 2);
  EXPECT_EQ(stitched.height, 2);
  EXPECT_EQ(stitched.width, 6);
  for (int y = 0; y < 2; ++y) {
    EXPECT_FLOAT_EQ(stitched.at(y, 0), 1.0f);
    EXPECT_FLOAT_EQ(stitched.at(y, 1), 1.0f);
    EXPECT_FLOAT_EQ(stitched.at(y, 2), 0.0f);  // gutter
    EXPECT_FLOAT_EQ(stitched.at(y, 3), 0.0f);
    EXPECT_FLOAT_EQ(stitched.at(y, 4), 2.0f);
    EXPECT_FLOAT_EQ(stitched.at(y, 5), 2.0f);
  }
  EXPECT_EQ(layout.tiles[1].col, 4);
}

TEST(Stitch, TilesAreDisjointAndInBounds) {
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.next_below(5);
    std::vector<ImagePlane> planes;
    for (std::size_t i = 0; i < n; ++i)
      planes.push_back(random_plane(1 + static_cast<int>(rng.next_below(12)),
                                    1 + static_cast<int>(rng.next_below(12)), 1, rng));
    const int gutter = static_cast<int>(rng.next_below(4));
    const int align = 1 << rng.next_below(3);
    const auto [stitched, layout] = stitch(planes, gutter, align);

    ImagePlane cover(layout.stitched_h, layout.stitched_w, 1, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      const TilePlacement& t = layout.tiles[i];
      EXPECT_EQ(t.row % align, 0);
      EXPECT_EQ(t.col % align, 0);
      ASSERT_LE(t.row + t.height, layout.stitched_h);
      ASSERT_LE(t.col + t.width, layout.stitched_w);
      for (int y = t.row; y < t.row + t.height; ++y)
        for (int x = t.col; x < t.col + t.width; ++x) {
          EXPECT_FLOAT_EQ(cover.at(y, x), 0.0f) << "tiles overlap";
          cover.at(y, x) = 1.0f;
        }
      // gutter ring around each tile stays zero in the stitched plane
      for (int y = std::max(0, t.row - gutter);
           y < std::min(layout.stitched_h, t.row + t.height + gutter); ++y)
        for (int x = std::max(0, t.col - gutter);
             x < std::min(layout.stitched_w, t.col + t.width + gutter); ++x) {
          const bool inside = y >= t.row && y < t.row + t.height && x >= t.col && x < t.col + t.width;
          if (!inside && cover.at(y, x) == 0.0f) {
            EXPECT_FLOAT_EQ(stitched.at(y, x), 0.0f);
          }
        }
    }
  }
}

TEST(Unstitch, StrideOneIsExactInverse) {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.next_below(5);
    std::vector<ImagePlane> planes;
    for (std::size_t i = 0; i < n; ++i)
      planes.push_back(random_plane(1 + static_cast<int>(rng.next_below(9)),
                                    1 + static_cast<int>(rng.next_below(9)), 2, rng));
    const auto [stitched, layout] = stitch(planes, static_cast<int>(rng.next_below(3)));
    const auto back = unstitch(stitched, layout, 1);
    ASSERT_EQ(back.size(), planes.size());
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_TRUE(back[i].same_dims(planes[i]));
      EXPECT_TRUE(std::equal(planes[i].data.begin(), planes[i].data.end(), back[i].data.begin()));
    }
  }
}

TEST(Unstitch, CeilingExtentRule) {
  // a 10-px tile at stride 4 crops to ceil(10/4) = 3 cells
  const ImagePlane tile(10, 10, 1, 1.0f);
  const auto [stitched, layout] = stitch({tile}, 4, 4);
  ImagePlane fmap((layout.stitched_h + 3) / 4, (layout.stitched_w + 3) / 4, 1, 7.0f);
  const auto tiles = unstitch(fmap, layout, 4);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0].height, 3);
  EXPECT_EQ(tiles[0].width, 3);
}

TEST(Unstitch, RejectsMismatchedDims) {
  const ImagePlane tile(8, 8, 1, 1.0f);
  const auto [stitched, layout] = stitch({tile}, 0, 4);
  const ImagePlane wrong(3, 3, 1, 0.0f);
  EXPECT_THROW(unstitch(wrong, layout, 4), ContractError);
}

TEST(Unstitch, InteriorMatchesPerScaleForwardPass) {
  const NetSpec net = stride4_net();
  const WeightBundle weights = make_random_weights(net, 55);
  Rng rng(6);
  const ImagePlane image = random_plane(48, 48, 1, rng);
  const std::vector<double> scales = {1.0, 0.75, 0.5};

  const auto pyramid = build_pyramid(image, scales);
  const int gutter = default_gutter(net);
  ASSERT_GE(gutter, net.receptive_field_radius());
  const auto [stitched, layout] = stitch(pyramid, gutter, net.tap_stride_lcm());
  const auto acts = forward_taps(stitched, net, weights);
  ASSERT_EQ(acts[0].stride, 4);
  const auto tiles = unstitch(acts[0].map, layout, 4);

  const int border = (net.receptive_field_radius() + 3) / 4;  // rf radius in tap cells
  int interior = 0;
  int matched = 0;
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const auto solo = forward_taps(pyramid[s], net, weights);
    const ImagePlane& expect = solo[0].map;
    ASSERT_EQ(tiles[s].height, expect.height);
    ASSERT_EQ(tiles[s].width, expect.width);
    for (int y = border; y < expect.height - border; ++y)
      for (int x = border; x < expect.width - border; ++x)
        for (int c = 0; c < expect.channels; ++c) {
          ++interior;
          if (std::abs(tiles[s].at(y, x, c) - expect.at(y, x, c)) <= 1e-4f) ++matched;
        }
  }
  ASSERT_GT(interior, 0);
  EXPECT_GE(static_cast<double>(matched) / interior, 0.99);
}

TEST(Features, ToyNetFieldEqualsActivationMap) {
  const NetSpec net = NetSpec::parse(
      "input_channels=1\n"
      "kind=conv name=c1 out_channels=4 kernel=3 stride=1 pad=1\n"
      "kind=relu tap=A\n");
  const WeightBundle weights = make_random_weights(net, 7);
  Rng rng(8);
  const ImagePlane image = random_plane(10, 12, 1, rng);
  const PixelFeatureField field =
      per_pixel_features(image, net, weights, {"A"}, {1.0}, {0.0f});
  EXPECT_EQ(field.dim, 4);

  const auto acts = forward_taps(image, net, weights);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 4; ++c)
        EXPECT_FLOAT_EQ(field.at(y, x)[c], acts[0].map.at(y, x, c)) << y << "," << x << "," << c;
}

TEST(Features, DimIsTapChannelsTimesScales) {
  const NetSpec net = stride4_net();
  const WeightBundle weights = make_random_weights(net, 9);
  Rng rng(10);
  const ImagePlane image = random_plane(24, 24, 1, rng);
  const PixelFeatureField field =
      per_pixel_features(image, net, weights, {"D"}, {1.0, 0.5}, {0.0f});
  EXPECT_EQ(field.dim, 3 * 2);
  EXPECT_EQ(field.height, 24);
  EXPECT_EQ(field.width, 24);
}

TEST(Features, TapMajorScaleMinorOrder) {
  const NetSpec net = NetSpec::parse(
      "input_channels=1\n"
      "kind=conv name=c1 out_channels=2 kernel=1 stride=1 pad=0\n"
      "kind=relu tap=A\n"
      "kind=conv name=c2 out_channels=3 kernel=3 stride=1 pad=1\n"
      "kind=relu tap=B\n");
  const WeightBundle weights = make_random_weights(net, 13);
  Rng rng(14);
  const ImagePlane image = random_plane(20, 20, 1, rng);
  const std::vector<double> scales = {1.0, 0.5};
  const PixelFeatureField field =
      per_pixel_features(image, net, weights, {"A", "B"}, scales, {0.0f});
  ASSERT_EQ(field.dim, 2 * 2 + 3 * 2);

  // independently: each tap at each scale, rescaled to image size
  const auto pyramid = build_pyramid(image, scales);
  std::vector<ImagePlane> expected;  // order: A@1.0, A@0.5, B@1.0, B@0.5
  for (const char* tap : {"A", "B"})
    for (std::size_t s = 0; s < scales.size(); ++s) {
      const auto acts = forward_taps(pyramid[s], net, weights);
      for (const auto& a : acts)
        if (a.name == std::string(tap))
          expected.push_back(resize_bilinear(a.map, image.height, image.width));
    }

  // compare interiors only: tile borders legitimately differ from a solo
  // pass for taps deeper than one layer
  const int border = 6;
  const int offsets[4] = {0, 2, 4, 7};  // slice starts: A@1.0, A@0.5, B@1.0, B@0.5
  const int widths[4] = {2, 2, 3, 3};
  for (int block = 0; block < 4; ++block)
    for (int y = border; y < 20 - border; ++y)
      for (int x = border; x < 20 - border; ++x)
        for (int c = 0; c < widths[block]; ++c)
          EXPECT_NEAR(field.at(y, x)[offsets[block] + c], expected[block].at(y, x, c), 1e-4)
              << "block " << block;
}

TEST(Features, AlexNetDescriptorDims) {
  const NetSpec net = NetSpec::load(std::filesystem::path(CK_SOURCE_DIR) / "data" / "alexnet.net");
  const WeightBundle weights = make_random_weights(net, 404);
  Rng rng(405);
  ImagePlane image(64, 64, 3);
  for (auto& v : image.data) v = static_cast<float>(rng.next_unit());
  const std::vector<float> mean = {0.5f, 0.5f, 0.5f};

  const PixelFeatureField all =
      per_pixel_features(image, net, weights, net.tap_names(), {1.0}, mean);
  EXPECT_EQ(all.dim, 1376);
  EXPECT_EQ(all.height, 64);
  EXPECT_EQ(all.width, 64);

  const PixelFeatureField conv2 =
      per_pixel_features(image, net, weights, {"Conv2"}, {1.0}, mean);
  EXPECT_EQ(conv2.dim, 256);
}

TEST(Features, ChannelMeanIsSubtracted) {
  // a constant image equal to the mean must produce the same field as a
  // zero image with zero mean
  const NetSpec net = NetSpec::parse(
      "input_channels=2\n"
      "kind=conv name=c1 out_channels=2 kernel=1 stride=1 pad=0\n"
      "kind=relu tap=A\n");
  const WeightBundle weights = make_random_weights(net, 15);
  const ImagePlane constant(4, 4, 2, 0.75f);
  const ImagePlane zeros(4, 4, 2, 0.0f);
  const PixelFeatureField a =
      per_pixel_features(constant, net, weights, {"A"}, {1.0}, {0.75f, 0.75f});
  const PixelFeatureField b = per_pixel_features(zeros, net, weights, {"A"}, {1.0}, {0.0f, 0.0f});
  EXPECT_TRUE(std::equal(a.data.begin(), a.data.end(), b.data.begin()));
}
