#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "snapspec/errors.hpp"
#include "snapspec/spectra.hpp"
#include "test_support.hpp"

using namespace snapspec;
namespace t = snapspec::testing;

TEST(Spectra, UniformGrid) {
  const auto g = uniform_grid(301);
  ASSERT_EQ(g.size(), 301u);
  EXPECT_DOUBLE_EQ(g.front(), 1000.0);
  EXPECT_DOUBLE_EQ(g.back(), 2500.0);
  EXPECT_NEAR(g[1] - g[0], 5.0, 1e-12);
}

TEST(Spectra, ValidateSpectrumReportsViolations) {
  const auto grid = uniform_grid(5);
  const SpectrumConstraints c{0.2, 0.3};
  const std::vector<float> ok{0.1f, 0.25f, 0.4f, 0.3f, 0.2f};
  EXPECT_FALSE(validate_spectrum(ok, grid, c).has_value());
  const std::vector<float> steep{0.1f, 0.5f, 0.4f, 0.3f, 0.2f};
  EXPECT_NE(validate_spectrum(steep, grid, c)->find("gradient"), std::string::npos);
  const std::vector<float> flat{0.4f, 0.45f, 0.5f, 0.45f, 0.4f};
  EXPECT_NE(validate_spectrum(flat, grid, c)->find("range"), std::string::npos);
  const std::vector<float> above{0.9f, 1.05f, 0.9f, 0.8f, 0.7f};
  EXPECT_TRUE(validate_spectrum(above, grid, c).has_value());
  EXPECT_TRUE(validate_spectrum(std::vector<float>{0.1f, 0.2f}, grid, c).has_value());
}

TEST(Spectra, SyntheticRowsSatisfyConstraints) {
  SyntheticSpectraOptions opt;
  opt.count = 150;
  opt.seed = 42;
  opt.bands = 300;
  const auto ds = generate_synthetic(opt);
  ASSERT_EQ(ds.size(), 150u);
  ASSERT_EQ(ds.bands(), 300u);
  EXPECT_NO_THROW(ds.validate(opt.constraints));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.row(i);
    for (std::size_t k = 1; k < r.size(); ++k) {
      ASSERT_LE(std::abs(static_cast<double>(r[k]) - r[k - 1]), opt.constraints.g_max);
    }
  }
}

TEST(Spectra, SyntheticIsSeededPerSpectrum) {
  SyntheticSpectraOptions a;
  a.count = 10;
  a.seed = 7;
  a.bands = 64;
  a.constraints.g_max = 0.3;
  SyntheticSpectraOptions b = a;
  b.count = 4;
  const auto da = generate_synthetic(a), db = generate_synthetic(b), da2 = generate_synthetic(a);
  EXPECT_EQ(da.values, da2.values);
  EXPECT_TRUE(std::equal(db.values.begin(), db.values.end(), da.values.begin()));
  b.seed = 8;
  EXPECT_NE(generate_synthetic(b).values, std::vector<float>(da.values.begin(), da.values.begin() + 4 * 64));
}

TEST(Spectra, InfeasibleConstraintsExhaustBudget) {
  SyntheticSpectraOptions opt;
  opt.count = 1;
  opt.bands = 300;
  opt.constraints = {1e-4, 0.3};  // 299 steps of 1e-4 cannot span 0.3
  opt.max_attempts = 50;
  EXPECT_THROW(generate_synthetic(opt), RejectionBudgetError);
}

// Two-pass long-double reference of the population Pearson coefficient.
static long double reference_pearson(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  long double ma = 0, mb = 0;
  for (std::size_t k = 0; k < n; ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(Spectra, PearsonMatchesLongDoubleReference) {
  const auto ds = t::random_dataset(20, 97, 3);
  const auto stats = pearson_stats(ds);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_NEAR(stats.pearson(i, i), 1.0, 1e-12);
    for (std::size_t j = 0; j < 20; ++j) {
      EXPECT_NEAR(stats.pearson(i, j), static_cast<double>(reference_pearson(ds.row(i), ds.row(j))), 1e-12);
      EXPECT_EQ(stats.pearson(i, j), stats.pearson(j, i));
    }
  }
}

TEST(Spectra, PearsonInvariantUnderAffineRescale) {
  auto ds = t::random_dataset(6, 40, 5);
  const auto before = pearson_stats(ds);
  for (std::size_t k = 0; k < 40; ++k) ds.values[2 * 40 + k] = 0.5f * ds.values[2 * 40 + k] + 0.1f;
  const auto after = pearson_stats(ds);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(before.pearson(2, j), after.pearson(2, j), 1e-6);
}

TEST(Spectra, DegenerateRowIsNamed) {
  auto ds = t::random_dataset(5, 16, 9);
  for (std::size_t k = 0; k < 16; ++k) ds.values[3 * 16 + k] = 0.4f;
  try {
    pearson_stats(ds);
    FAIL() << "expected DegenerateSpectrumError";
  } catch (const DegenerateSpectrumError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

TEST(Spectra, Spc1RoundTripIsBitExact) {
  const auto dir = t::scratch_dir("spc1");
  SyntheticSpectraOptions opt;
  opt.count = 12;
  opt.bands = 50;
  opt.seed = 1;
  opt.constraints.g_max = 0.2;
  const auto ds = generate_synthetic(opt);
  save_spectra(ds, dir / "a.spc");
  const auto back = load_spectra(dir / "a.spc");
  EXPECT_EQ(back.values, ds.values);
  EXPECT_EQ(back.grid, ds.grid);
  save_spectra(back, dir / "b.spc");
  EXPECT_EQ(t::read_file(dir / "a.spc"), t::read_file(dir / "b.spc"));
  EXPECT_EQ(t::read_file(dir / "a.spc").substr(0, 4), "SPC1");
  EXPECT_THROW(load_spectra(dir / "a.spc", uniform_grid(51)), FormatError);
}

TEST(Spectra, Spc1RejectsCorruptFiles) {
  const auto dir = t::scratch_dir("spc1_bad");
  const auto ds = t::random_dataset(3, 8, 2);
  save_spectra(ds, dir / "ok.spc");
  std::string bytes = t::read_file(dir / "ok.spc");
  {
    std::ofstream os(dir / "magic.spc", std::ios::binary);
    os << "XPC1" << bytes.substr(4);
  }
  {
    std::ofstream os(dir / "short.spc", std::ios::binary);
    os << bytes.substr(0, bytes.size() - 3);
  }
  {
    std::ofstream os(dir / "long.spc", std::ios::binary);
    os << bytes << "junk";
  }
  EXPECT_THROW(load_spectra(dir / "magic.spc"), FormatError);
  EXPECT_THROW(load_spectra(dir / "short.spc"), FormatError);
  EXPECT_THROW(load_spectra(dir / "long.spc"), FormatError);
}

TEST(Spectra, CsvExportHasWavelengthHeader) {
  const auto dir = t::scratch_dir("spc_csv");
  const auto ds = t::random_dataset(2, 3, 2);
  export_spectra_csv(ds, dir / "s.csv");
  std::ifstream is(dir / "s.csv");
  std::string header;
  std::getline(is, header);
  EXPECT_NE(header.find("1000"), std::string::npos);
  EXPECT_NE(header.find("2500"), std::string::npos);
  std::size_t rows = 0;
  for (std::string line; std::getline(is, line);) rows += !line.empty();
  EXPECT_EQ(rows, 2u);
}
