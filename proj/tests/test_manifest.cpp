#include <doctest.h>

#include <fstream>

#include "inout/errors.hpp"
#include "inout/manifest.hpp"
#include "oracles.hpp"

using namespace inout;

namespace {

DatasetManifest small_manifest() {
  std::vector<Sample> s;
  s.push_back(make_sample("a", Image(4, 6, 3, 0.1f), Label::negative, Source::original, Split::train));
  s.push_back(make_sample("b", Image(4, 6, 3, 0.2f), Label::positive, Source::original, Split::train));
  s.push_back(make_sample("c", Image(4, 6, 3, 0.3f), Label::positive, Source::diffusion, Split::train));
  s.push_back(make_sample("d", Image(4, 6, 3, 0.4f), Label::negative, Source::original, Split::test));
  return DatasetManifest(std::move(s), {4, 6}, {{"note", "x"}});
}

}  // namespace

TEST_CASE("counts per split and label") {
  const DatasetManifest m = small_manifest();
  CHECK(m.counts(Split::train) == SplitCounts{1, 2});
  CHECK(m.counts(Split::test) == SplitCounts{1, 0});
  CHECK(m.select(Split::train, Label::positive).size() == 2);
  CHECK(m.find("c")->source == Source::diffusion);
  CHECK(m.find("zzz") == nullptr);
}

TEST_CASE("duplicate ids are rejected") {
  std::vector<Sample> s;
  s.push_back(make_sample("a", Image(2, 2, 3), Label::negative, Source::original, Split::train));
  s.push_back(make_sample("a", Image(2, 2, 3, 1.0f), Label::positive, Source::original, Split::test));
  CHECK_THROWS_AS(DatasetManifest(s, {2, 2}), ValidationError);
}

TEST_CASE("content hash depends on order, labels and pixels but not on paths") {
  const DatasetManifest m = small_manifest();
  auto samples = m.samples();
  std::swap(samples[0], samples[1]);
  CHECK(DatasetManifest(samples, {4, 6}).content_hash() != m.content_hash());

  samples = m.samples();
  samples[0].path = "elsewhere.png";
  CHECK(DatasetManifest(samples, {4, 6}, m.metadata()).content_hash() == m.content_hash());

  samples = m.samples();
  samples[3].label = Label::positive;
  CHECK(DatasetManifest(samples, {4, 6}).content_hash() != m.content_hash());
}

TEST_CASE("manifest file round trip and tamper detection") {
  const auto dir = oracle::scratch_dir("manifest");
  const DatasetManifest m = small_manifest();
  write_manifest(dir / "m.jsonl", m);
  const DatasetManifest back = read_manifest(dir / "m.jsonl");
  CHECK(back.content_hash() == m.content_hash());
  CHECK(back.size() == m.size());
  CHECK(back.metadata() == m.metadata());
  CHECK_FALSE(back.has_pixels());

  std::ifstream in(dir / "m.jsonl");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto pos = all.find("\"negative\"", all.find('\n'));
  all.replace(pos, 10, "\"positive\"");
  std::ofstream(dir / "bad.jsonl") << all;
  CHECK_THROWS_AS(read_manifest(dir / "bad.jsonl"), IngestError);
  CHECK_THROWS_AS(read_manifest(dir / "none.jsonl"), IngestError);
}

TEST_CASE("dataset directory round trip reproduces the content hash") {
  const auto dir = oracle::scratch_dir("dataset_dir");
  std::vector<Sample> s;
  s.push_back(make_sample("x", oracle::random_image(5, 7, 3, 9), Label::positive, Source::region, Split::train));
  s.push_back(make_sample("y", oracle::random_image(5, 7, 1, 8), Label::negative, Source::original, Split::test));
  const DatasetManifest saved = save_dataset(dir, DatasetManifest(s, {5, 7}));
  const DatasetManifest loaded = load_dataset_dir(dir);
  CHECK(loaded.content_hash() == saved.content_hash());
  CHECK(loaded.has_pixels());
  CHECK(loaded.find("y")->image().channels == 3);

  // Overwrite one image with different pixels: the stored digest no longer matches.
  write_png(dir / loaded.find("x")->path, Image(5, 7, 3, 0.5f));
  CHECK_THROWS_AS(load_dataset_dir(dir), IngestError);
}
