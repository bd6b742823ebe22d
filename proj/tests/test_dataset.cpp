#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace gridcast;
using gridcast::testing::TempDir;
using gridcast::testing::write_file;

namespace {

/// Ausgrid-style file: one row per client-day with 48 half-hour slots.
std::string ausgrid_text(const std::vector<std::string>& clients, std::int64_t first_day, std::size_t days,
                         const std::string& skip_client = "", std::int64_t skip_day = -1) {
    std::string s = "Solar home half-hour data\nCustomer,Generator Capacity,Postcode,Consumption Category,date";
    for (int k = 1; k <= 48; ++k) s += "," + std::to_string(k / 2 % 24) + ":" + (k % 2 ? "30" : "00");
    s += ",Row Quality\n";
    for (const auto& c : clients)
        for (std::size_t d = 0; d < days; ++d) {
            const std::int64_t day = first_day + static_cast<std::int64_t>(d);
            if (c == skip_client && day == skip_day) continue;
            const auto ymd = civil_from_days(day);
            char date[16];
            std::snprintf(date, sizeof date, "%u/%02u/%d", static_cast<unsigned>(ymd.day()), static_cast<unsigned>(ymd.month()),
                          static_cast<int>(ymd.year()));
            for (const char* cat : {"GC", "CL"}) {
                s += c + ",3.5,2076," + cat + "," + date;
                for (int k = 0; k < 48; ++k) s += "," + std::to_string(0.01 * ((k + d) % 7) + (cat[0] == 'C' && cat[1] == 'L' ? 9.0 : 0.0));
                s += ",\n";
            }
        }
    return s;
}

HourlyDataset ramp(std::size_t T, std::size_t C) {
    HourlyDataset ds;
    ds.start = HourStamp::from_civil(2012, 1, 1, 0);
    ds.hours = T;
    for (std::size_t c = 0; c < C; ++c) ds.client_ids.push_back("c" + std::to_string(c));
    ds.values.resize(T * C);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) ds.values[t * C + c] = std::sin(0.1 * static_cast<double>(t) + static_cast<double>(c)) + 0.01 * t;
    return ds;
}

} // namespace

TEST(LoadRawCsv, WideThreeTimestampsTwoClientsGivesSixRows) {
    TempDir dir;
    write_file(dir / "w.csv", "timestamp,a,b\n2012-01-01 00:00:00,1,2\n2012-01-01 01:00:00,3,4\n2012-01-01 02:00:00,5,6\n");
    const RawDataset raw = load_raw_csv(dir / "w.csv", SourceFormat::WideCsv);
    EXPECT_EQ(raw.row_count(), 6u);
    ASSERT_EQ(raw.series.size(), 2u);
    EXPECT_EQ(raw.series[1].client_id, "b");
    EXPECT_DOUBLE_EQ(raw.series[1].loads[2], 6.0);
    EXPECT_TRUE(raw.incomplete.empty());
}

TEST(LoadRawCsv, SemicolonFilesUseDecimalComma) {
    TempDir dir;
    write_file(dir / "w.csv", "\"\";\"MT_001\"\n\"2011-01-01 00:15:00\";1,5\n\"2011-01-01 00:30:00\";2,25\n");
    const RawDataset raw = load_raw_csv(dir / "w.csv", SourceFormat::WideCsv);
    ASSERT_EQ(raw.series.size(), 1u);
    EXPECT_EQ(raw.series[0].client_id, "MT_001");
    EXPECT_DOUBLE_EQ(raw.series[0].loads[1], 2.25);
}

TEST(LoadRawCsv, HeaderOnlyIsEmptyDataset) {
    TempDir dir;
    write_file(dir / "h.csv", "timestamp,a,b\n");
    try {
        load_raw_csv(dir / "h.csv", SourceFormat::WideCsv);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
    }
}

TEST(LoadRawCsv, MissingFileAndMalformedRowsCarryCodes) {
    TempDir dir;
    try {
        load_raw_csv(dir / "nope.csv", SourceFormat::WideCsv);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
    }
    write_file(dir / "bad.csv", "timestamp,a\n2012-01-01 00:00,1\n2012-01-01 01:00,1,2\n");
    try {
        load_raw_csv(dir / "bad.csv", SourceFormat::WideCsv);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MalformedRow);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(LoadRawCsv, UnparsableValueMarksClientIncomplete) {
    TempDir dir;
    write_file(dir / "w.csv", "timestamp,a,b\n2012-01-01 00:00,1,2\n2012-01-01 01:00,,4\n2012-01-01 02:00,5,6\n");
    const RawDataset raw = load_raw_csv(dir / "w.csv", SourceFormat::WideCsv);
    ASSERT_EQ(raw.incomplete.size(), 1u);
    EXPECT_EQ(raw.incomplete[0].client_id, "a");
    EXPECT_EQ(raw.row_count(), 5u);
}

TEST(LoadRawCsv, AusgridKeepsGeneralConsumptionAndReportsMissingDay) {
    TempDir dir;
    const std::int64_t day0 = days_from_civil(2010, 7, 1);
    write_file(dir / "a.csv", ausgrid_text({"1", "2", "3"}, day0, 5, "2", day0 + 2));
    const RawDataset raw = load_raw_csv(dir / "a.csv", SourceFormat::AusgridLong);
    ASSERT_EQ(raw.series.size(), 3u);
    EXPECT_EQ(raw.series[0].loads.size(), 5u * 48u);
    for (double v : raw.series[0].loads) EXPECT_LT(v, 1.0);  // controlled-load rows skipped
    ASSERT_EQ(raw.incomplete.size(), 1u);
    EXPECT_EQ(raw.incomplete[0].client_id, "2");

    const HourlyDataset hourly = resample_hourly(raw, Region::NewSouthWales);
    EXPECT_EQ(hourly.client_ids, (std::vector<std::string>{"1", "3"}));
    ASSERT_EQ(hourly.dropped.size(), 1u);
    EXPECT_EQ(hourly.dropped[0].client_id, "2");
    EXPECT_EQ(hourly.hours, 5u * 24u);
}

TEST(ResampleHourly, HalfHoursSumIntoTheHourBeginningAtTheTimestamp) {
    TempDir dir;
    std::string text = "timestamp,a\n2012-01-01 00:00,0.3\n2012-01-01 00:30,0.5\n2012-01-01 01:00,0.1\n2012-01-01 01:30,0.2\n";
    for (int h = 2; h < 24; ++h) {
        char buf[80];
        std::snprintf(buf, sizeof buf, "2012-01-01 %02d:00,1\n2012-01-01 %02d:30,2\n", h, h);
        text += buf;
    }
    write_file(dir / "w.csv", text);
    const HourlyDataset ds = resample_hourly(load_raw_csv(dir / "w.csv", SourceFormat::WideCsv));
    ASSERT_EQ(ds.hours, 24u);
    EXPECT_EQ(ds.at(0, 0), 0.3 + 0.5);
    EXPECT_EQ(ds.at(1, 0), 0.1 + 0.2);
    EXPECT_EQ(ds.at(23, 0), 3.0);
    EXPECT_EQ(ds.start, HourStamp::from_civil(2012, 1, 1, 0));
}

TEST(ResampleHourly, HourlyInputPassesThroughUnchanged) {
    TempDir dir;
    const HourlyDataset src = ramp(48, 3);
    write_wide_csv(src, dir / "h.csv");
    const HourlyDataset back = load_hourly_csv(dir / "h.csv", Region::Custom);
    EXPECT_EQ(back.values, src.values);
    EXPECT_EQ(back.client_ids, src.client_ids);
    EXPECT_EQ(back.start, src.start);
}

TEST(ResampleHourly, ClientsAlignToTheCommonRange) {
    TempDir dir;
    std::string text = "timestamp,a,b\n";
    for (int h = 0; h < 30; ++h) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "2012-01-01 %02d:00,%d,%s\n", h % 24, h, h < 3 ? "" : "7");
        if (h >= 24) std::snprintf(buf, sizeof buf, "2012-01-02 %02d:00,%d,7\n", h - 24, h);
        text += buf;
    }
    write_file(dir / "w.csv", text);
    // b lacks its first three hours: it is reported incomplete and dropped, a keeps its full range.
    const HourlyDataset ds = resample_hourly(load_raw_csv(dir / "w.csv", SourceFormat::WideCsv));
    EXPECT_EQ(ds.client_ids, (std::vector<std::string>{"a"}));
    EXPECT_EQ(ds.hours, 30u);
}

TEST(ResampleHourly, RejectsOddResolutionAndDisjointRanges) {
    RawDataset raw;
    raw.series.push_back({"a", {0, 45, 90}, {1, 2, 3}});
    try {
        resample_hourly(raw);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InconsistentResolution);
    }
    RawDataset disjoint;
    RawSeries a{"a", {}, {}}, b{"b", {}, {}};
    for (int h = 0; h < 30; ++h) a.minutes.push_back(h * 60), a.loads.push_back(1.0);
    for (int h = 100; h < 130; ++h) b.minutes.push_back(h * 60), b.loads.push_back(1.0);
    disjoint.series = {a, b};
    try {
        resample_hourly(disjoint);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoCommonTimeRange);
    }
}

TEST(ResampleHourly, ThreeAusgridYearsGive26304Hours) {
    TempDir dir;
    // 1 July 2010 to 30 June 2013, split into the three yearly files the data ships as.
    const std::int64_t d0 = days_from_civil(2010, 7, 1), d1 = days_from_civil(2011, 7, 1), d2 = days_from_civil(2012, 7, 1),
                       d3 = days_from_civil(2013, 7, 1);
    write_file(dir / "y1.csv", ausgrid_text({"1", "2"}, d0, static_cast<std::size_t>(d1 - d0)));
    write_file(dir / "y2.csv", ausgrid_text({"1", "2"}, d1, static_cast<std::size_t>(d2 - d1)));
    write_file(dir / "y3.csv", ausgrid_text({"1", "2"}, d2, static_cast<std::size_t>(d3 - d2)));
    std::vector<RawDataset> parts;
    for (const char* f : {"y1.csv", "y2.csv", "y3.csv"}) parts.push_back(load_raw_csv(dir / f, SourceFormat::AusgridLong));
    const HourlyDataset ds = resample_hourly(merge_raw(std::move(parts)), Region::NewSouthWales);
    EXPECT_EQ(ds.hours, 3u * 365u * 24u + 24u);
    EXPECT_EQ(ds.hours, 26304u);
    EXPECT_EQ(ds.clients(), 2u);
    // Each hourly total is the exact sum of its two half-hour sources.
    const double a = std::stod(std::to_string(0.01 * 2)), b = std::stod(std::to_string(0.01 * 3));
    EXPECT_EQ(ds.at(1, 0), a + b);
}

TEST(LoadMatrixCsv, HeaderlessRowsStartAtTheGivenHour) {
    TempDir dir;
    std::string text;
    for (int t = 0; t < 30; ++t) text += std::to_string(2 * t + 1) + "," + std::to_string(2 * t + 2) + "\n";
    write_file(dir / "m.txt", text);
    const HourlyDataset ds = resample_hourly(load_matrix_csv(dir / "m.txt", HourStamp::from_civil(2012, 1, 1, 5)));
    EXPECT_EQ(ds.client_ids, (std::vector<std::string>{"c0", "c1"}));
    EXPECT_EQ(ds.hours, 30u);
    EXPECT_EQ(ds.start, HourStamp::from_civil(2012, 1, 1, 5));
    EXPECT_EQ(ds.at(2, 1), 6.0);
}

TEST(SplitDataset, FloorArithmetic) {
    auto s = split_dataset(ramp(26304, 1));
    EXPECT_EQ(s.train_size(), 18412u);
    EXPECT_EQ(s.val_size(), 2630u);
    EXPECT_EQ(s.test_size(), 5262u);
    s = split_dataset(ramp(10, 1));
    EXPECT_EQ(s.train_size(), 7u);
    EXPECT_EQ(s.val_size(), 1u);
    EXPECT_EQ(s.test_size(), 2u);
    for (std::size_t T : {10u, 11u, 99u, 1001u, 8760u}) {
        s = split_dataset(ramp(T, 2));
        EXPECT_EQ(s.train_size(), T * 7 / 10);
        EXPECT_EQ(s.val_size(), T / 10);
        EXPECT_EQ(s.train_size() + s.val_size() + s.test_size(), T);
    }
    try {
        split_dataset(ramp(9, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooShort);
    }
}

TEST(Standardizer, TwoPointTrainRangeUsesPopulationStd) {
    HourlyDataset ds = ramp(20, 1);
    for (std::size_t t = 0; t < 20; ++t) ds.values[t] = t % 2 ? 3.0 : 1.0;
    const SplitDataset split = split_dataset(ds);
    const ScalerParams p = fit_standardizer(split);
    EXPECT_DOUBLE_EQ(p.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(p.std[0], 1.0);
    const SplitDataset z = apply_standardizer(split, p);
    EXPECT_DOUBLE_EQ(z.data.at(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(z.data.at(1, 0), 1.0);
}

TEST(Standardizer, TrainRangeHasZeroMeanUnitStdAndRoundTrips) {
    const SplitDataset split = split_dataset(ramp(1000, 4));
    const ScalerParams p = fit_standardizer(split);
    const SplitDataset z = apply_standardizer(split, p);
    for (std::size_t c = 0; c < 4; ++c) {
        double m = 0, v = 0;
        for (std::size_t t = 0; t < z.train_end; ++t) m += z.data.at(t, c);
        m /= static_cast<double>(z.train_end);
        for (std::size_t t = 0; t < z.train_end; ++t) v += (z.data.at(t, c) - m) * (z.data.at(t, c) - m);
        EXPECT_NEAR(m, 0.0, 1e-9);
        EXPECT_NEAR(std::sqrt(v / static_cast<double>(z.train_end)), 1.0, 1e-9);
    }
    const HourlyDataset back = invert_standardizer(z.data, p);
    for (std::size_t i = 0; i < back.values.size(); ++i) EXPECT_NEAR(back.values[i], split.data.values[i], 1e-12);
}

TEST(Standardizer, ConstantTrainRangeIsRejected) {
    HourlyDataset ds = ramp(20, 2);
    for (std::size_t t = 0; t < 20; ++t) ds.values[t * 2 + 1] = 5.0;
    try {
        fit_standardizer(split_dataset(ds));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConstantSeries);
        EXPECT_NE(std::string(e.what()).find("c1"), std::string::npos);
    }
}

TEST(Hashes, DatasetHashTracksContent) {
    HourlyDataset a = ramp(50, 2), b = ramp(50, 2);
    EXPECT_EQ(dataset_hash(a), dataset_hash(b));
    b.values[7] += 1e-12;
    EXPECT_NE(dataset_hash(a), dataset_hash(b));
    EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
}
