#pragma once

#include "moodpipe/config.hpp"
#include "moodpipe/corpus.hpp"
#include "moodpipe/encoder.hpp"
#include "moodpipe/eval_report.hpp"
#include "moodpipe/gbdt.hpp"
#include "moodpipe/gradcheck.hpp"
#include "moodpipe/pipeline.hpp"
#include "moodpipe/text_features.hpp"
#include "moodpipe/tokenizer.hpp"
