// Copyright 2026 The bpca Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch.hpp>

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bpca/io.hpp"
#include "test_helpers.hpp"

using namespace bpca;
using testutil::TempDir;

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is),
                                    std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("bmat round trips are bitwise") {
  TempDir dir("bmat");
  Rng rng(81);
  for (auto [r, c] : {std::pair<Index, Index>{1, 1}, {3, 7}, {20, 4}}) {
    Matrix m = rng.gaussian(r, c, 3.0);
    m(0, 0) = -0.0;  // signed zero must survive
    const std::string path = dir.str("t.bmat");
    write_bmat(m, path);
    const Matrix back = read_bmat(path);
    REQUIRE(back.rows() == r);
    REQUIRE(back.cols() == c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) {
        CHECK(std::bit_cast<std::uint64_t>(back(i, j)) ==
              std::bit_cast<std::uint64_t>(m(i, j)));
      }
  }
}

TEST_CASE("bmat byte layout is frozen") {
  TempDir dir("golden");
  Matrix m(1, 2);
  m << 1.0, -2.0;
  const std::string path = dir.str("g.bmat");
  write_bmat(m, path);
  const std::vector<unsigned char> expected = {
      'B', 'M', 'A', 'T',
      1, 0, 0, 0,                       // version
      1, 0, 0, 0, 0, 0, 0, 0,           // rows
      2, 0, 0, 0, 0, 0, 0, 0,           // cols
      0, 0, 0, 0, 0, 0, 0xf0, 0x3f,     // 1.0
      0, 0, 0, 0, 0, 0, 0x00, 0xc0,     // -2.0
  };
  CHECK(slurp(path) == expected);
}

TEST_CASE("bmat rejects corrupted containers") {
  TempDir dir("corrupt");
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const std::string path = dir.str("c.bmat");
  write_bmat(m, path);

  auto bytes = slurp(path);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  spit(dir.str("bad_magic.bmat"), bad_magic);
  CHECK_THROWS_AS(read_bmat(dir.str("bad_magic.bmat")), DataError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  spit(dir.str("bad_version.bmat"), bad_version);
  CHECK_THROWS_AS(read_bmat(dir.str("bad_version.bmat")), DataError);

  auto truncated = bytes;
  truncated.pop_back();
  spit(dir.str("trunc.bmat"), truncated);
  CHECK_THROWS_AS(read_bmat(dir.str("trunc.bmat")), DataError);

  auto extra = bytes;
  extra.push_back(0);
  spit(dir.str("extra.bmat"), extra);
  CHECK_THROWS_AS(read_bmat(dir.str("extra.bmat")), DataError);

  CHECK_THROWS_AS(read_bmat(dir.str("missing.bmat")), DataError);

  // Empty payload parses; consumers reject it.
  write_bmat(Matrix(0, 3), dir.str("empty.bmat"));
  const Matrix empty = read_bmat(dir.str("empty.bmat"));
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 3);
  CHECK_THROWS_AS(dual_mean(LinkFunction::identity(3), empty), DataError);
}

TEST_CASE("csv parsing") {
  TempDir dir("csv");
  {
    std::ofstream os(dir.str("a.csv"));
    os << "1,2\n3,4\n";
  }
  const Matrix a = read_csv(dir.str("a.csv"));
  REQUIRE(a.rows() == 2);
  CHECK(a(0, 0) == 1.0);
  CHECK(a(1, 1) == 4.0);

  {
    std::ofstream os(dir.str("header.csv"));
    os << "# x,y\n0.5,0.25\n";
  }
  CHECK(read_csv(dir.str("header.csv"))(0, 1) == 0.25);

  {
    std::ofstream os(dir.str("ragged.csv"));
    os << "1,2\n3\n";
  }
  CHECK_THROWS_AS(read_csv(dir.str("ragged.csv")), DataError);

  {
    std::ofstream os(dir.str("junk.csv"));
    os << "1,foo\n";
  }
  CHECK_THROWS_AS(read_csv(dir.str("junk.csv")), DataError);

  {
    std::ofstream os(dir.str("inf.csv"));
    os << "1,inf\n";
  }
  CHECK_THROWS_AS(read_csv(dir.str("inf.csv")), DataError);

  Rng rng(82);
  const Matrix m = rng.gaussian(5, 3, 2.5);
  write_csv(m, dir.str("rt.csv"));
  const Matrix back = read_csv(dir.str("rt.csv"));
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);  // %.17g round trips
}

TEST_CASE("labels csv") {
  TempDir dir("labels");
  {
    std::ofstream os(dir.str("l.csv"));
    os << "0\n2\n1\n";
  }
  const std::vector<int> labels = read_labels(dir.str("l.csv"));
  CHECK(labels == std::vector<int>{0, 2, 1});
  {
    std::ofstream os(dir.str("frac.csv"));
    os << "0.5\n";
  }
  CHECK_THROWS_AS(read_labels(dir.str("frac.csv")), DataError);
}

TEST_CASE("model bundles round trip bit-exactly") {
  TempDir dir("bundle");
  Rng rng(83);
  const LinkFunction link = LinkFunction::leaky_relu(0.01, 6);
  Matrix x(40, 6);
  for (Index i = 0; i < x.rows(); ++i)
    x.row(i) = apply_link(link, rng.gaussian(6, 1, 1.0).col(0)).transpose();
  FitOptions opts;
  opts.max_epochs = 40;
  const FitResult res = fit(x, link, 2, opts);

  const std::string bundle = dir.str("model");
  save_model(res.model, bundle);
  const BpcaModel loaded = load_model(bundle);

  CHECK(loaded.link().beta() == 0.01);
  CHECK(loaded.gauge() == std::string("none"));
  const Vector c = rng.gaussian(2, 1).col(0);
  const Vector before = decode(res.model, c);
  const Vector after = decode(loaded, c);
  for (Index j = 0; j < before.size(); ++j)
    CHECK(std::bit_cast<std::uint64_t>(before[j]) ==
          std::bit_cast<std::uint64_t>(after[j]));
}

TEST_CASE("model bundle corruption is detected") {
  TempDir dir("badbundle");
  Rng rng(84);
  const LinkFunction link = LinkFunction::identity(4);
  const FitResult res = fit(rng.gaussian(20, 4), link, 2);
  const std::string bundle = dir.str("model");
  save_model(res.model, bundle);

  // Manifest dimension no longer matches V.bmat.
  {
    std::ofstream os(bundle + "/manifest.txt", std::ios::trunc);
    os << "format_version 1\nlink identity\nd 5\nk 2\ngauge none\n";
  }
  CHECK_THROWS_AS(load_model(bundle), DataError);

  {
    std::ofstream os(bundle + "/manifest.txt", std::ios::trunc);
    os << "format_version 2\nlink identity\nd 4\nk 2\ngauge none\n";
  }
  CHECK_THROWS_AS(load_model(bundle), DataError);

  {
    std::ofstream os(bundle + "/manifest.txt", std::ios::trunc);
    os << "format_version 1\nlink identity\nd 4\nk 2\ngauge zero-sum\n";
  }
  CHECK_THROWS_AS(load_model(bundle), DataError);

  {
    std::ofstream os(bundle + "/manifest.txt", std::ios::trunc);
    os << "format_version 1\nlink identity\nd 4\ngauge none\n";
  }
  CHECK_THROWS_AS(load_model(bundle), DataError);

  CHECK_THROWS_AS(load_model(dir.str("nowhere")), DataError);
}

TEST_CASE("non-conjugate bundles load with a warning") {
  TempDir dir("warn");
  Rng rng(85);
  // Hand-built model whose directions are deliberately not conjugate.
  const BpcaModel model(LinkFunction::identity(3),
                        Vector::Zero(3), rng.gaussian(3, 2, 2.0));
  const std::string bundle = dir.str("model");
  save_model(model, bundle);
  CHECK_NOTHROW(load_model(bundle));
}
