#include "slv/dataset.h"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "slv/error.h"

namespace slv {
namespace {

const std::string kFixtures = SLV_FIXTURE_DIR;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string parse_error_message(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_dataset(in, "mem.jsonl");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(DatasetTest, EmptyInputIsEmptyDataset) {
  std::istringstream in("");
  const auto loaded = parse_dataset(in);
  EXPECT_TRUE(loaded.dataset.records.empty());
  EXPECT_TRUE(loaded.warnings.empty());
}

TEST(DatasetTest, GoldenFileRoundTripsByteForByte) {
  const std::string path = kFixtures + "/golden_dataset.jsonl";
  const auto loaded = load_dataset(path);
  const Dataset& ds = loaded.dataset;
  ASSERT_EQ(ds.records.size(), 3u);
  EXPECT_EQ(ds.num_classes, 2u);
  EXPECT_EQ(ds.feature_dim, 3u);
  EXPECT_EQ(ds.class_name(1), "boat");

  const auto& a = ds.records[0];
  EXPECT_EQ(a.image_id, "a");
  EXPECT_EQ(a.proposals[1], (Box{10, 5, 50, 35}));
  EXPECT_EQ(a.features[0][2], -0.25);
  ASSERT_TRUE(a.scores.has_value());
  EXPECT_EQ((*a.scores)(0, 0), 0.75);
  EXPECT_TRUE(a.has_ground_truth);
  EXPECT_FALSE(ds.records[1].scores.has_value());
  EXPECT_FALSE(ds.records[2].has_ground_truth);

  const auto gt = ds.ground_truth();
  EXPECT_EQ(gt.at("b").at(1).size(), 2u);

  std::ostringstream out;
  write_dataset(out, ds);
  EXPECT_EQ(out.str(), read_file(path));
}

TEST(DatasetTest, OutOfBoundsProposalIsClippedWithWarning) {
  const auto loaded = load_dataset(kFixtures + "/clipped_dataset.jsonl");
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find("record 'edge'"), std::string::npos);
  EXPECT_NE(loaded.warnings[0].find("proposals[0]"), std::string::npos);
  EXPECT_EQ(loaded.dataset.records[0].proposals[0], (Box{0, 2, 10, 20}));
}

TEST(DatasetTest, ErrorNamesLineRecordAndField) {
  try {
    load_dataset(kFixtures + "/bad_dataset.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad_dataset.jsonl:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("record 'broken'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("proposals[1]"), std::string::npos) << msg;
  }
}

TEST(DatasetTest, MalformedInputsAreParseErrors) {
  const std::string header = R"({"format":"slv-dataset","version":1,"num_classes":1})" "\n";
  EXPECT_NE(parse_error_message(header + "not json\n").find("mem.jsonl:2"), std::string::npos);
  EXPECT_NE(parse_error_message(R"({"format":"other","version":1})" "\n").find("format"),
            std::string::npos);
  EXPECT_NE(parse_error_message(header +
                                R"({"id":"x","height":8,"width":8,"labels":[2],"proposals":[]})")
                .find("field 'labels'"),
            std::string::npos);
  EXPECT_NE(parse_error_message(
                header + R"({"id":"x","height":8,"width":8,"labels":[1],"proposals":[[9,9,12,12]]})")
                .find("entirely outside"),
            std::string::npos);
  const std::string rec = R"({"id":"x","height":8,"width":8,"labels":[1],"proposals":[]})" "\n";
  EXPECT_NE(parse_error_message(header + rec + rec).find("duplicate"), std::string::npos);
  EXPECT_NE(parse_error_message(header + R"({"id":"x","height":8,"width":8,"labels":[1]})")
                .find("field 'proposals': missing"),
            std::string::npos);
}

TEST(DatasetTest, MissingFileIsInputError) {
  EXPECT_THROW(load_dataset(kFixtures + "/does_not_exist.jsonl"), InputError);
}

TEST(PseudoLabelTest, RoundTrip) {
  std::vector<PseudoLabelRecord> records(3);
  records[0].image_id = "a";
  records[0].supervision.classes = {{0, {{1, 2, 3, 4}}}, {2, {{0, 0, 5, 5}, {6, 6, 9, 9}}}};
  records[1].image_id = "b";
  records[2].image_id = "c";
  records[2].error = "no scores";
  std::ostringstream out;
  write_pseudo_labels(out, 3, records);
  std::istringstream in(out.str());
  const auto back = parse_pseudo_labels(in);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].image_id, records[i].image_id);
    EXPECT_EQ(back[i].supervision, records[i].supervision);
    EXPECT_EQ(back[i].error, records[i].error);
  }
}

TEST(DetectionsTest, RoundTrip) {
  const std::vector<Detection> dets = {{"a", 1, {0, 0, 4, 4}, 0.123456789012345},
                                       {"b", 0, {2, 3, 8, 9}, 1e-7}};
  std::ostringstream out;
  write_detections(out, dets);
  std::istringstream in(out.str());
  const auto back = parse_detections(in);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].image_id, dets[i].image_id);
    EXPECT_EQ(back[i].class_id, dets[i].class_id);
    EXPECT_EQ(back[i].box, dets[i].box);
    EXPECT_EQ(back[i].score, dets[i].score);
  }
}

}  // namespace
}  // namespace slv
