#pragma once

#include "lingua_spoof/error.hpp"
#include "lingua_spoof/hash.hpp"
#include "lingua_spoof/transcript.hpp"
#include "lingua_spoof/wordnet.hpp"
#include "lingua_spoof/audio.hpp"
#include "lingua_spoof/dsp.hpp"
#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/stub.hpp"
#include "lingua_spoof/http.hpp"
#include "lingua_spoof/constraints.hpp"
#include "lingua_spoof/attack.hpp"
#include "lingua_spoof/csv.hpp"
#include "lingua_spoof/features.hpp"
#include "lingua_spoof/stats.hpp"
#include "lingua_spoof/report.hpp"
#include "lingua_spoof/campaign.hpp"
